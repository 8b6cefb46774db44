//! Time-dependent Stokes systems `∂t u − a div(b D(u)) + a∇P = f`,
//! `div u = div R`, on the band: exact constant-coefficient solver, pressure
//! perturbation by Picard iteration, and the variable-coefficient system by
//! θ-continuation.

use serde::Serialize;
use serde_json::json;

use crate::besov::{besov_norm, BesovIndex, NormTrace};
use crate::elliptic::CoefficientField;
use crate::error::{Error, Result};
use crate::report::{finite_or_null, EstimateReport};
use crate::spectral::{high_part, low_cutoff, Phys, Space, SpectralField, Trajectory, C64};

/// `D(u) = ∇u + (∇u)^T`.
pub fn deformation_tensor(u: &SpectralField) -> SpectralField {
    let g = u.gradient();
    g.add(&g.transpose())
}

/// Pointwise product of band-limited fields, truncated back to the band.
fn mul(u: &SpectralField, a: &Phys) -> SpectralField {
    u.to_phys().mul(a).to_spectral()
}

/// `a div(b D(u))` for scalar coefficients given on the grid.
pub fn viscous_term(u: &SpectralField, a: &Phys, b: &Phys) -> SpectralField {
    mul(&mul(&deformation_tensor(u), b).divergence(), a)
}

/// `(Pu, Qu)` for any vector field; the mean is kept in the first part.
fn split(u: &SpectralField) -> (SpectralField, SpectralField) {
    let mean = u.mean();
    let (mut p, q) = u.clone().without_mean().leray_split().expect("vector field");
    for (d, m) in mean.into_iter().enumerate() {
        p.comp_mut(d)[0] = C64::new(m, 0.0);
    }
    (p, q)
}

#[derive(Clone, Debug)]
pub struct StokesData {
    pub u0: SpectralField,
    pub f: Trajectory,
    pub r: Trajectory,
    pub dr: Trajectory,
}

impl StokesData {
    /// `∂tR` is taken from second-order differences of the samples of `R`.
    pub fn new(u0: SpectralField, f: Trajectory, r: Trajectory) -> Result<Self> {
        let dr = r.derivative();
        Self::with_time_derivative(u0, f, r, dr)
    }

    pub fn with_time_derivative(u0: SpectralField, f: Trajectory, r: Trajectory, dr: Trajectory) -> Result<Self> {
        let n = u0.dim();
        if u0.comps() != n {
            return Err(Error::Components { expected: n, found: u0.comps() });
        }
        let m = f.steps();
        if m == 0 || r.steps() != m || dr.steps() != m || (f.dt - r.dt).abs() > 1e-15 * f.dt || (f.dt - dr.dt).abs() > 1e-15 * f.dt {
            return Err(Error::InvalidInput("forcing, constraint field and its derivative must share a time grid".into()));
        }
        for tr in [&f, &r, &dr] {
            for x in &tr.fields {
                x.same_space(&u0)?;
                if x.comps() != n {
                    return Err(Error::Components { expected: n, found: x.comps() });
                }
            }
        }
        let defect = u0.sub(&r.fields[0]).divergence().without_mean().l2_norm();
        let scale = u0.divergence().l2_norm().max(1.0);
        if defect > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("div u0 differs from div R(0) by {defect:.3e}")));
        }
        Ok(Self { u0, f, r, dr })
    }

    /// Zero forcing and `R = 0`; `u0` must be divergence-free.
    pub fn free(u0: SpectralField, steps: usize, dt: f64) -> Result<Self> {
        let z = Trajectory::zeros(u0.space(), u0.dim(), steps, dt);
        Self::with_time_derivative(u0, z.clone(), z.clone(), z)
    }

    /// Zero initial datum and constraint, forcing only.
    pub fn forced(f: Trajectory) -> Result<Self> {
        let sp = f.fields[0].space().clone();
        let n = sp.dim();
        let z = Trajectory::zeros(&sp, n, f.steps(), f.dt);
        Self::with_time_derivative(SpectralField::zeros(&sp, n), f, z.clone(), z)
    }

    pub fn space(&self) -> &Space {
        self.u0.space()
    }

    pub fn dt(&self) -> f64 {
        self.f.dt
    }

    pub fn steps(&self) -> usize {
        self.f.steps()
    }

    pub fn horizon(&self) -> f64 {
        self.f.horizon()
    }

    pub fn with_forcing(&self, f: Trajectory) -> Self {
        Self { f, ..self.clone() }
    }

    fn is_zero(&self) -> bool {
        let z = |t: &Trajectory| t.fields.iter().all(|x| x.max_abs_coefficient() == 0.0);
        self.u0.max_abs_coefficient() == 0.0 && z(&self.f) && z(&self.r) && z(&self.dr)
    }
}

/// One accepted or rejected continuation step.
#[derive(Clone, Debug, Serialize)]
pub struct HomotopyStep {
    pub theta: f64,
    pub step: f64,
    pub iterations: usize,
    pub contraction: f64,
    pub accepted: bool,
}

/// Solution at the current continuation parameter, with interpolated
/// coefficients `a_θ = (1 − θ)ā + θa`, `b_θ` likewise.
#[derive(Clone, Debug)]
pub struct HomotopyState {
    pub theta: f64,
    pub step: f64,
    pub a: CoefficientField,
    pub b: CoefficientField,
    pub u: Trajectory,
    pub grad_p: Trajectory,
}

/// Low/high decomposition `u = u¹ + u²` with `u¹` solving the pressure
/// perturbation by `Ṡ_m(a − ā)` and `u²` the remaining variable-coefficient
/// correction.
#[derive(Clone, Debug)]
pub struct ThreeStepSplit {
    pub m: i32,
    pub u1: Trajectory,
    pub grad_p1: Trajectory,
    pub u2: Trajectory,
    pub grad_p2: Trajectory,
    /// `max_t ‖u¹ + u² − u‖_{L²} / max_t ‖u‖_{L²}`.
    pub defect: f64,
    pub traces: Vec<NormTrace>,
}

#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub u: Trajectory,
    pub grad_p: Trajectory,
    pub traces: Vec<NormTrace>,
    pub iterations: usize,
    pub contraction: f64,
    pub homotopy: Vec<HomotopyStep>,
    pub split: Option<ThreeStepSplit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesConfig {
    pub tol: f64,
    pub max_picard: usize,
    pub homotopy_eps0: f64,
    pub splitting_threshold: f64,
    pub p: f64,
    pub split_m: Option<i32>,
    pub three_step: bool,
}

impl Default for StokesConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_picard: 200, homotopy_eps0: 0.25, splitting_threshold: 0.1, p: 2.0, split_m: None, three_step: true }
    }
}

fn velocity_index(n: usize, p: f64) -> BesovIndex {
    BesovIndex { s: n as f64 / p - 1.0, p, r: 1.0 }
}

fn pressure_low_index(n: usize, p: f64) -> BesovIndex {
    BesovIndex { s: n as f64 / p - n as f64 / 2.0, p, r: 2.0 }
}

/// Per-slot ETD weights for `∂t v + λv = F`, `F` linear on each step:
/// `v_{k+1} = e^{−z}v_k + dt(w₀F_k + w₁F_{k+1})`, `z = λdt`.
fn etd_weights(z: f64) -> (f64, f64, f64) {
    if z < 0.5 {
        let (mut w0, mut w1) = (0.0, 0.0);
        let mut pow = 1.0;
        let mut fact = 1.0;
        for k in 0..16 {
            let f1 = fact * (k + 1) as f64;
            let f2 = f1 * (k + 2) as f64;
            w0 += pow * (k + 1) as f64 / f2;
            w1 += pow / f2;
            pow *= -z;
            fact = f1;
        }
        ((-z).exp(), w0, w1)
    } else {
        let e = (-z).exp();
        let g = (1.0 - e) / z;
        let w1 = 1.0 / z - (1.0 - e) / (z * z);
        (e, g - w1, w1)
    }
}

/// Solves `∂t u − ā b̄ div D(u) + ā∇P = f + g`, `div u = div R`, at the
/// sample times; `g` is an optional extra forcing.
fn constant_core(data: &StokesData, abar: f64, bbar: f64, extra: Option<&Trajectory>) -> (Trajectory, Trajectory) {
    let sp = data.space();
    let n = sp.dim();
    let len = sp.len();
    let dt = data.dt();
    let nu = abar * bbar;
    let weights: Vec<(f64, f64, f64)> = sp.xi_abs().iter().map(|&r| etd_weights(nu * r * r * dt)).collect();
    let steps = data.steps();
    let mut u = Vec::with_capacity(steps + 1);
    let mut gp = Vec::with_capacity(steps + 1);
    let mut pf = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let h = match extra {
            Some(g) => data.f.fields[i].add(&g.fields[i]),
            None => data.f.fields[i].clone(),
        };
        let (ph, qh) = split(&h);
        let (_, qr) = split(&data.r.fields[i]);
        let (_, qdr) = split(&data.dr.fields[i]);
        let grad_div_r = qr.laplacian();
        gp.push(qh.sub(&qdr).scale(1.0 / abar).add(&grad_div_r.scale(2.0 * bbar)));
        pf.push(ph);
        u.push(qr);
    }
    let (mut pu, _) = split(&data.u0);
    let add_p = |target: &mut SpectralField, pu: &SpectralField| {
        *target = target.add(pu);
    };
    add_p(&mut u[0], &pu);
    for i in 0..steps {
        let mut next = SpectralField::zeros(sp, n);
        for c in 0..n {
            let (a, f0, f1) = (pu.comp(c), pf[i].comp(c), pf[i + 1].comp(c));
            let dst = next.comp_mut(c);
            for s in 0..len {
                let (e, w0, w1) = weights[s];
                dst[s] = a[s] * e + (f0[s] * w0 + f1[s] * w1) * dt;
            }
        }
        pu = next;
        add_p(&mut u[i + 1], &pu);
    }
    (Trajectory::new(dt, u), Trajectory::new(dt, gp))
}

/// Norm traces of a solution: `‖u‖_{Ḃ^{n/p−1}_{p,1}}` (time exponent ∞),
/// `‖(∂tu, ∇²u, ∇P)‖_{Ḃ^{n/p−1}_{p,1}}` and `‖∇P‖_{Ḃ^{n/p−n/2}_{p,2}}`
/// (time exponent 1).
pub fn solution_traces(u: &Trajectory, grad_p: &Trajectory, p: f64) -> Vec<NormTrace> {
    let n = u.fields[0].dim();
    let vi = velocity_index(n, p);
    let li = pressure_low_index(n, p);
    let times = u.times();
    let du = u.derivative();
    let un: Vec<f64> = u.fields.iter().map(|x| besov_norm(x, vi)).collect();
    let high: Vec<f64> = (0..u.fields.len())
        .map(|i| besov_norm(&du.fields[i], vi) + besov_norm(&u.fields[i].gradient().gradient(), vi) + besov_norm(&grad_p.fields[i], vi))
        .collect();
    let low: Vec<f64> = grad_p.fields.iter().map(|x| besov_norm(x, li)).collect();
    vec![
        NormTrace::new("u", times.clone(), un, vi, f64::INFINITY),
        NormTrace::new("dtu_d2u_gradp", times.clone(), high, vi, 1.0),
        NormTrace::new("gradp_low", times, low, li, 1.0),
    ]
}

/// `E_T` size of a pair: `‖u‖_{L^∞_T} + ‖(∂tu, ∇²u, ∇P)‖_{L¹_T}` in
/// `Ḃ^{n/p−1}_{p,1}`.
pub fn energy_norm(u: &Trajectory, grad_p: &Trajectory, p: f64) -> f64 {
    let tr = solution_traces(u, grad_p, p);
    tr[0].total() + tr[1].total()
}

fn finish(u: Trajectory, grad_p: Trajectory, p: f64, iterations: usize, contraction: f64) -> StokesSolution {
    let traces = solution_traces(&u, &grad_p, p);
    StokesSolution { u, grad_p, traces, iterations, contraction, homotopy: Vec::new(), split: None }
}

/// Exact solve of the constant-coefficient system: `Qu = QR`,
/// `ā∇P = Q(f − ∂tR) + 2āb̄∇div R`, and the heat flow of `Pu` with
/// exponential integration of the forcing.
pub fn constant_stokes_solve(data: &StokesData, abar: f64, bbar: f64) -> Result<StokesSolution> {
    if !(abar > 0.0 && bbar > 0.0) {
        return Err(Error::InvalidInput(format!("constant state ({abar}, {bbar}) must be positive")));
    }
    let (u, gp) = constant_core(data, abar, bbar, None);
    Ok(finish(u, gp, 2.0, 1, 0.0))
}

struct Picard {
    u: Trajectory,
    grad_p: Trajectory,
    iterations: usize,
    contraction: f64,
    converged: bool,
}

/// Fixed-point iteration `(u, ∇P) ← Sol(f + g(u, ∇P))` around the constant
/// state, from `start`; stops when the relative `E_T` update is below `tol`,
/// or gives up when it stops contracting.
fn picard(
    data: &StokesData,
    abar: f64,
    bbar: f64,
    start: Option<(Trajectory, Trajectory)>,
    tol: f64,
    max_iter: usize,
    p: f64,
    g: &dyn Fn(&SpectralField, &SpectralField) -> SpectralField,
) -> Picard {
    let (mut u, mut gp) = match start {
        Some(s) => s,
        None => constant_core(data, abar, bbar, None),
    };
    let mut prev = f64::NAN;
    let mut contraction: f64 = 0.0;
    let mut rising = 0;
    for k in 1..=max_iter {
        let extra = u.zip_map(&gp, |a, b| g(a, b));
        let (nu, ngp) = constant_core(data, abar, bbar, Some(&extra));
        let upd = energy_norm(&nu.sub(&u), &ngp.sub(&gp), p);
        let size = energy_norm(&nu, &ngp, p);
        u = nu;
        gp = ngp;
        let rel = if size > 0.0 { upd / size } else { upd };
        if prev.is_finite() && prev > 0.0 {
            let ratio = upd / prev;
            contraction = if k == 2 { ratio } else { contraction.max(ratio) };
            rising = if ratio > 0.95 { rising + 1 } else { 0 };
        }
        if rel <= tol {
            return Picard { u, grad_p: gp, iterations: k, contraction, converged: true };
        }
        if !upd.is_finite() || rising >= 3 {
            return Picard { u, grad_p: gp, iterations: k, contraction, converged: false };
        }
        prev = upd;
    }
    Picard { u, grad_p: gp, iterations: max_iter, contraction, converged: false }
}

/// Solves `∂t u − ā b̄ div D(u) + (ā + c)∇P = f`, `div u = div R` by Picard
/// iteration on the lagged pressure term `c∇P`.
pub fn perturbed_stokes_solve(data: &StokesData, abar: f64, bbar: f64, c: &SpectralField, cfg: &StokesConfig) -> Result<StokesSolution> {
    if !(abar > 0.0 && bbar > 0.0) {
        return Err(Error::InvalidInput(format!("constant state ({abar}, {bbar}) must be positive")));
    }
    c.same_space(&data.u0)?;
    if c.comps() != 1 {
        return Err(Error::Components { expected: 1, found: c.comps() });
    }
    let (u0, gp0) = constant_core(data, abar, bbar, None);
    if c.max_abs_coefficient() == 0.0 {
        return Ok(finish(u0, gp0, cfg.p, 1, 0.0));
    }
    let cp = c.to_phys();
    let g = |_: &SpectralField, gp: &SpectralField| mul(gp, &cp).scale(-1.0);
    let run = picard(data, abar, bbar, Some((u0, gp0)), cfg.tol, cfg.max_picard, cfg.p, &g);
    if !run.converged {
        let norm = besov_norm(c, BesovIndex { s: data.space().dim() as f64 / cfg.p, p: cfg.p, r: 1.0 });
        return Err(Error::PerturbationTooLarge { norm, contraction: run.contraction });
    }
    Ok(finish(run.u, run.grad_p, cfg.p, run.iterations + 1, run.contraction))
}

fn check_exponent(n: usize, p: f64) -> Result<()> {
    let lo = if n == 3 { 1.2 } else { 1.0 };
    if p > lo && p < 4.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponents(format!("p = {p} outside ({lo}, 4) for n = {n}")))
    }
}

/// θ-continuation from `(ā, b̄)` to `(a, b)`; each step iterates the
/// constant solver with forcing
/// `f + (ā − a_θ)∇P + a_θ div(b_θ D(u)) − ā b̄ div D(u)` from the previous
/// accepted solution.
fn continuation(data: &StokesData, a: &CoefficientField, b: &CoefficientField, cfg: &StokesConfig) -> Result<StokesSolution> {
    let (abar, bbar) = (a.bar, b.bar);
    let (u, gp) = constant_core(data, abar, bbar, None);
    if a.is_constant() && b.is_constant() {
        let mut sol = finish(u, gp, cfg.p, 1, 0.0);
        sol.homotopy.push(HomotopyStep { theta: 1.0, step: 1.0, iterations: 1, contraction: 0.0, accepted: true });
        return Ok(sol);
    }
    let mut state = HomotopyState { theta: 0.0, step: cfg.homotopy_eps0, a: a.interpolate(0.0)?, b: b.interpolate(0.0)?, u, grad_p: gp };
    let mut log = Vec::new();
    let mut total = 1;
    let mut worst: f64 = 0.0;
    let mut successes = 0;
    while state.theta < 1.0 {
        let next = (state.theta + state.step).min(1.0);
        let at = a.interpolate(next)?;
        let bt = b.interpolate(next)?;
        let (ap, bp) = (at.phys().clone(), bt.phys().clone());
        let dev = ap.map(|v| abar - v);
        let g = |u: &SpectralField, gp: &SpectralField| {
            mul(gp, &dev).add(&viscous_term(u, &ap, &bp)).sub(&deformation_tensor(u).divergence().scale(abar * bbar))
        };
        let run = picard(data, abar, bbar, Some((state.u.clone(), state.grad_p.clone())), cfg.tol, cfg.max_picard, cfg.p, &g);
        total += run.iterations;
        log.push(HomotopyStep { theta: next, step: state.step, iterations: run.iterations, contraction: run.contraction, accepted: run.converged });
        if run.converged {
            worst = worst.max(run.contraction);
            state = HomotopyState { theta: next, step: state.step, a: at, b: bt, u: run.u, grad_p: run.grad_p };
            successes += 1;
            if successes >= 2 {
                state.step = (2.0 * state.step).min(0.5);
                successes = 0;
            }
        } else {
            state.step *= 0.5;
            successes = 0;
            if state.step < 1e-4 {
                return Err(Error::ContinuationFailure { theta: state.theta, step: state.step });
            }
        }
    }
    let mut sol = finish(state.u, state.grad_p, cfg.p, total, worst);
    sol.homotopy = log;
    Ok(sol)
}

/// Solves the variable-coefficient system
/// `∂t u − a div(b D(u)) + a∇P = f`, `div u = div R` by θ-continuation,
/// optionally with the low/high split of the solution.
pub fn variable_stokes_solve(data: &StokesData, a: &CoefficientField, b: &CoefficientField, cfg: &StokesConfig) -> Result<StokesSolution> {
    let n = data.space().dim();
    check_exponent(n, cfg.p)?;
    a.values.same_space(&data.u0)?;
    b.values.same_space(&data.u0)?;
    let mut sol = continuation(data, a, b, cfg)?;
    if cfg.three_step && !(a.is_constant() && b.is_constant()) {
        sol.split = Some(three_step_split(data, a, b, &sol, cfg)?);
    }
    Ok(sol)
}

fn three_step_split(data: &StokesData, a: &CoefficientField, b: &CoefficientField, sol: &StokesSolution, cfg: &StokesConfig) -> Result<ThreeStepSplit> {
    let m = match cfg.split_m {
        Some(m) => m,
        None => splitting_diagnostics(a, b, None, cfg.splitting_threshold, cfg.p)?.m,
    };
    let dev = a.deviation();
    let low = low_cutoff(&dev, m)?;
    let high = high_part(&dev, m)?.to_phys();
    let inner = StokesConfig { three_step: false, ..cfg.clone() };
    let s1 = perturbed_stokes_solve(data, a.bar, b.bar, &low, &inner)?;
    let (ap, bp) = (a.phys(), b.phys());
    let nu = a.bar * b.bar;
    let forcing = s1.u.zip_map(&s1.grad_p, |u, gp| {
        viscous_term(u, ap, bp).sub(&deformation_tensor(u).divergence().scale(nu)).sub(&mul(gp, &high))
    });
    let s2 = continuation(&StokesData::forced(forcing)?, a, b, &inner)?;
    let sum = s1.u.add(&s2.u);
    let scale = sol.u.fields.iter().map(|x| x.l2_norm()).fold(0.0, f64::max);
    let defect = sum.max_l2_distance(&sol.u) / if scale > 0.0 { scale } else { 1.0 };
    let mut traces = Vec::new();
    for (tag, s) in [("u1", &s1), ("u2", &s2)] {
        for t in &s.traces {
            let mut t = t.clone();
            t.name = format!("{tag}_{}", t.name);
            traces.push(t);
        }
    }
    Ok(ThreeStepSplit { m, u1: s1.u, grad_p1: s1.grad_p, u2: s2.u, grad_p2: s2.grad_p, defect, traces })
}

/// Splitting quantities for one cutoff pair.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    pub m: i32,
    pub big_m: Option<i32>,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub threshold: f64,
    /// `(m, T_m^1, T_m^4)` over the whole cutoff range.
    pub sweep: Vec<(i32, f64, f64)>,
}

struct SplitTerms {
    idx: BesovIndex,
    idx_m1: BesovIndex,
    ctilde: f64,
    inv_term: f64,
    dev: SpectralField,
    cross: SpectralField,
    ab_dev: SpectralField,
    a_bar: f64,
    b_bar: f64,
    a_dev_norm: f64,
    b_dev_norm: f64,
}

fn split_terms(a: &CoefficientField, b: &CoefficientField, p: f64) -> Result<SplitTerms> {
    let n = a.space().dim() as f64;
    let idx = BesovIndex::new(n / p, p, 1.0)?;
    let idx_m1 = idx.with_s(n / p - 1.0);
    let inv = a.compose(|v| 1.0 / v)?;
    let inv_term = 1.0 / a.bar + besov_norm(&inv.values, idx);
    let a_dev_norm = besov_norm(&a.deviation(), idx);
    let b_dev_norm = besov_norm(&b.deviation(), idx);
    let ctilde = inv_term * (1.0 + a_dev_norm / a.lower);
    let ga = a.values.gradient();
    let gb = b.values.gradient();
    let cross = SpectralField::stack(&[mul(&gb, a.phys()), mul(&ga, b.phys())])?;
    let ab = a.values.product(&b.values);
    let ab_dev = ab.sub(&SpectralField::constant(a.space(), a.bar * b.bar)).without_mean();
    Ok(SplitTerms { idx, idx_m1, ctilde, inv_term, dev: a.deviation(), cross, ab_dev, a_bar: a.bar, b_bar: b.bar, a_dev_norm, b_dev_norm })
}

fn t1(st: &SplitTerms, m: i32) -> Result<f64> {
    Ok(besov_norm(&high_part(&st.dev, m)?, st.idx) * st.inv_term)
}

fn t4(st: &SplitTerms, n: usize, m: i32, big_m: i32) -> Result<f64> {
    let p = st.idx.p;
    let cross = high_part(&st.cross, m)?;
    let base = besov_norm(&cross, st.idx_m1) + besov_norm(&high_part(&st.ab_dev, m)?, st.idx);
    if n == 3 {
        return Ok(base);
    }
    let low_grad = besov_norm(&low_cutoff(&st.dev, m)?.gradient(), BesovIndex { s: 2.0 / p, p, r: 2.0 });
    let tail = besov_norm(&high_part(&st.cross, big_m)?, st.idx_m1) + besov_norm(&high_part(&st.ab_dev, big_m)?, st.idx_m1);
    Ok(base + st.ctilde * (1.0 + low_grad) * tail)
}

/// `T_m^1 … T_m^4` (and for `n = 2` the two-cutoff `T_{m,M}^3`, `T_{m,M}^4`)
/// at cutoff `m` (and `M`), or at the smallest cutoff for which `T^1` and
/// `T^4` fall below `threshold` when `m` is `None`.
pub fn splitting_diagnostics(a: &CoefficientField, b: &CoefficientField, m: Option<i32>, threshold: f64, p: f64) -> Result<SplittingReport> {
    let n = a.space().dim();
    let part = a.space().partition();
    let (lo, hi) = (part.j_min - 1, part.j_max + 1);
    let st = split_terms(a, b, p)?;
    let mut sweep = Vec::new();
    for j in lo..=hi {
        sweep.push((j, t1(&st, j)?, t4(&st, n, j, j)?));
    }
    let (m, big_m) = match m {
        Some(m) => {
            if m < lo || m > hi {
                return Err(Error::Range { j: m, lo, hi });
            }
            let big = if n == 2 { (m..=hi).find(|&bm| t4(&st, n, m, bm).map_or(false, |v| v < threshold)).unwrap_or(hi) } else { m };
            (m, big)
        }
        None => {
            let mut found = None;
            'outer: for m in lo..=hi {
                if t1(&st, m)? >= threshold {
                    continue;
                }
                for bm in m..=hi {
                    if t4(&st, n, m, bm)? < threshold {
                        found = Some((m, bm));
                        break 'outer;
                    }
                    if n == 3 {
                        break;
                    }
                }
            }
            found.ok_or(Error::SplittingUnreachable)?
        }
    };
    let idx_half = BesovIndex { s: n as f64 / p - 0.5, p, r: 2.0 };
    let (t2, t3) = if n == 3 {
        let grad_low = besov_norm(&low_cutoff(&a.values, m)?.gradient(), idx_half);
        let t2 = st.ctilde * (1.0 + grad_low);
        let cross = besov_norm(&low_cutoff(&st.cross, m)?, BesovIndex { s: 3.0 / p - 0.5, p, r: 1.0 });
        (t2, cross + t2 * (st.a_bar + st.a_dev_norm) * (st.b_bar + st.b_dev_norm))
    } else {
        let grad_low = besov_norm(&low_cutoff(&a.values, m)?.gradient(), BesovIndex { s: 2.0 / p, p, r: 2.0 });
        let t2 = st.ctilde * (1.0 + grad_low);
        let cm = besov_norm(&low_cutoff(&st.cross, m)?, st.idx);
        let cbm = besov_norm(&low_cutoff(&st.cross, big_m)?, st.idx);
        (t2, cm + t2 * cbm)
    };
    Ok(SplittingReport {
        m,
        big_m: if n == 2 { Some(big_m) } else { None },
        t1: t1(&st, m)?,
        t2,
        t3,
        t4: t4(&st, n, m, big_m)?,
        threshold,
        sweep,
    })
}

/// Smallest `C` with `LHS(t) ≤ (‖u0‖ + ‖(f, ∂tR, ∇div R)‖_{L¹_t}) e^{C(t+1)}`
/// at every stored time, all norms in `Ḃ^{n/p−1}_{p,1}`.
pub fn apriori_estimate_check(sol: &StokesSolution, data: &StokesData, p: f64) -> EstimateReport {
    let n = data.space().dim();
    let vi = velocity_index(n, p);
    let traces = solution_traces(&sol.u, &sol.grad_p, p);
    let lhs_inf = traces[0].running();
    let lhs_l1 = traces[1].running();
    let times = sol.u.times();
    let rhs_vals: Vec<f64> = (0..=data.steps())
        .map(|i| besov_norm(&data.f.fields[i], vi) + besov_norm(&data.dr.fields[i], vi) + besov_norm(&split(&data.r.fields[i]).1.laplacian(), vi))
        .collect();
    let rhs_l1 = crate::besov::running_lq(&times, &rhs_vals, 1.0);
    let u0 = besov_norm(&data.u0, vi);
    let mut c = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for i in 0..times.len() {
        let lhs = lhs_inf[i] + lhs_l1[i];
        let base = u0 + rhs_l1[i];
        if base > 0.0 && lhs > 0.0 {
            let ci = (lhs / base).ln() / (times[i] + 1.0);
            if ci > c {
                c = ci;
                worst_t = times[i];
            }
        }
    }
    let defined = c.is_finite() && !data.is_zero();
    let measured = if defined { c } else { f64::NAN };
    EstimateReport::new(
        "stokes_apriori",
        json!({"p": p, "dt": data.dt(), "horizon": data.horizon(), "worst_time": worst_t, "constant": finite_or_null(measured)}),
        measured,
        *data.space().grid(),
    )
    .with_pass(defined || data.is_zero())
}

/// Defects of the computed pair in the continuous equations, at every
/// interior time node: momentum (centered time differences) and constraint.
#[derive(Clone, Debug, Serialize)]
pub struct StokesResidual {
    pub momentum: Vec<f64>,
    pub constraint: Vec<f64>,
}

impl StokesResidual {
    pub fn max_momentum(&self) -> f64 {
        self.momentum.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_constraint(&self) -> f64 {
        self.constraint.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn stokes_residual(sol: &StokesSolution, data: &StokesData, a: &CoefficientField, b: &CoefficientField) -> StokesResidual {
    let m = data.steps();
    let dt = data.dt();
    let mut momentum = Vec::new();
    let mut constraint = Vec::new();
    for i in 1..m {
        let u = &sol.u.fields[i];
        let dtu = sol.u.fields[i + 1].sub(&sol.u.fields[i - 1]).scale(0.5 / dt);
        let r = dtu.sub(&viscous_term(u, a.phys(), b.phys())).add(&mul(&sol.grad_p.fields[i], a.phys())).sub(&data.f.fields[i]);
        momentum.push(r.l2_norm());
        constraint.push(u.sub(&data.r.fields[i]).divergence().l2_norm());
    }
    StokesResidual { momentum, constraint }
}

/// `E_T` distance between two solutions.
pub fn solution_distance(x: &StokesSolution, y: &StokesSolution, p: f64) -> f64 {
    energy_norm(&x.u.sub(&y.u), &x.grad_p.sub(&y.grad_p), p)
}

/// `‖P((a − ā)∇P)‖_{Ḃ^{n/p−1}_{p,1}} / ‖∇P‖_{Ḃ^{n/p−1}_{p,1}}` against the
/// product bound `‖a − ā‖_{L^∞}`; returns `(ratio, bound)`.
pub fn pressure_gain(a: &CoefficientField, grad_p: &SpectralField, p: f64) -> (f64, f64) {
    let idx = velocity_index(a.space().dim(), p);
    let dev = a.phys().map(|v| v - a.bar);
    let prod = mul(grad_p, &dev);
    let (pp, _) = split(&prod);
    let den = besov_norm(grad_p, idx);
    let ratio = if den > 0.0 { besov_norm(&pp.without_mean(), idx) / den } else { 0.0 };
    (ratio, a.oscillation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{random_field, Basis, FieldSpectrum, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize) -> Space {
        Basis::new(Grid::periodic(2, n).unwrap()).unwrap()
    }

    #[test]
    fn etd_weights_match_closed_form() {
        for z in [0.3, 0.49, 0.51, 2.0] {
            let (e, w0, w1) = etd_weights(z);
            assert!((e - (-z).exp()).abs() < 1e-15);
            assert!((w0 + w1 - (1.0 - e) / z).abs() < 1e-13);
        }
        let (_, a0, a1) = etd_weights(0.4999999);
        let (_, b0, b1) = etd_weights(0.5000001);
        assert!((a0 - b0).abs() < 1e-6 && (a1 - b1).abs() < 1e-6);
        let (_, w0, w1) = etd_weights(0.0);
        assert_eq!((w0, w1), (0.5, 0.5));
    }

    #[test]
    fn deformation_is_symmetric() {
        let sp = space(16);
        let u = random_field(&sp, 2, FieldSpectrum::full(1.0), &mut ChaCha8Rng::seed_from_u64(1));
        let d = deformation_tensor(&u);
        assert!(d.max_diff(&d.transpose()) < 1e-15);
    }

    #[test]
    fn single_mode_decays() {
        let sp = space(16);
        let u0 = SpectralField::stack(&[SpectralField::mode(&sp, [0, 2, 0], 1.0, false).unwrap(), SpectralField::zeros(&sp, 1)]).unwrap();
        let data = StokesData::free(u0.clone(), 10, 0.1).unwrap();
        let sol = constant_stokes_solve(&data, 2.0, 0.5).unwrap();
        let exact = u0.scale((-4.0f64).exp());
        assert!(sol.u.last().max_diff(&exact) < 1e-14);
    }

    #[test]
    fn linear_forcing_is_integrated_exactly() {
        let sp = space(16);
        let mode = SpectralField::stack(&[SpectralField::mode(&sp, [0, 1, 0], 1.0, true).unwrap(), SpectralField::zeros(&sp, 1)]).unwrap();
        let dt = 0.05;
        let f = Trajectory::new(dt, (0..=20).map(|i| mode.scale(i as f64 * dt)).collect());
        let sol = constant_stokes_solve(&StokesData::forced(f).unwrap(), 1.0, 1.0).unwrap();
        let t: f64 = 1.0;
        let exact = t - 1.0 + (-t).exp();
        assert!(sol.u.last().max_diff(&mode.scale(exact)) < 1e-14);
    }

    #[test]
    fn constant_state_perturbation_is_identity() {
        let sp = space(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u0 = random_field(&sp, 2, FieldSpectrum::full(1.0), &mut rng).leray().unwrap();
        let f = Trajectory::new(0.1, (0..=5).map(|_| random_field(&sp, 2, FieldSpectrum::full(1.0), &mut rng)).collect());
        let data = StokesData::new(u0, f.clone(), Trajectory::zeros(&sp, 2, 5, 0.1)).unwrap();
        let a = constant_stokes_solve(&data, 1.5, 0.7).unwrap();
        let b = perturbed_stokes_solve(&data, 1.5, 0.7, &SpectralField::zeros(&sp, 1), &StokesConfig::default()).unwrap();
        assert_eq!(a.u.last().coefficients(), b.u.last().coefficients());
    }

    #[test]
    fn constraint_is_enforced() {
        let sp = space(16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r0 = random_field(&sp, 2, FieldSpectrum::full(1.5), &mut rng);
        let dt = 0.1;
        let r = Trajectory::new(dt, (0..=4).map(|i| r0.scale(1.0 + i as f64 * dt)).collect());
        let u0 = r0.gradient_part().unwrap();
        let data = StokesData::new(u0, Trajectory::zeros(&sp, 2, 4, dt), r.clone()).unwrap();
        let sol = constant_stokes_solve(&data, 1.0, 1.0).unwrap();
        for i in 0..=4 {
            let qr = r.fields[i].gradient_part().unwrap();
            assert!(sol.u.fields[i].max_diff(&qr) < 1e-14);
        }
    }

    #[test]
    fn splitting_constant_floors() {
        let sp = space(32);
        let a = CoefficientField::constant(&sp, 2.0).unwrap();
        let b = CoefficientField::constant(&sp, 0.5).unwrap();
        let rep = splitting_diagnostics(&a, &b, Some(0), 0.1, 2.0).unwrap();
        assert_eq!(rep.t1, 0.0);
        assert_eq!(rep.t4, 0.0);
    }
}
