//! Inhomogeneous incompressible Navier–Stokes with density-dependent
//! viscosity: the Lagrangian linear problem, the nonlinear fixed point, the
//! passage back to Eulerian variables, and a direct Eulerian solver.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::besov::{besov_norm, BesovIndex, NormTrace};
use crate::elliptic::{solve_pressure, CoefficientField};
use crate::error::{Error, Result};
use crate::lagrange::{compose, flow_trajectory, inverse_flow, mat_mul, mat_vec, smallness, transpose, FlowState};
use crate::report::{finite_or_null, EstimateReport};
use crate::spectral::{Phys, SpectralField, Trajectory};
use crate::stokes::{deformation_tensor, energy_norm, solution_traces, variable_stokes_solve, viscous_term, StokesConfig, StokesData};

/// Viscosity as a function of density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ViscosityLaw {
    /// `μ ≡ μ₀`.
    Constant { mu0: f64 },
    /// `μ(ρ) = μ₀(1 + slope·(ρ − ρ̄))`.
    Linear { mu0: f64, slope: f64 },
}

impl Default for ViscosityLaw {
    fn default() -> Self {
        ViscosityLaw::Linear { mu0: 1.0, slope: 0.1 }
    }
}

impl ViscosityLaw {
    pub fn eval(&self, rho: f64, rho_bar: f64) -> f64 {
        match *self {
            ViscosityLaw::Constant { mu0 } => mu0,
            ViscosityLaw::Linear { mu0, slope } => mu0 * (1.0 + slope * (rho - rho_bar)),
        }
    }
}

/// `ρ₀` with its bounds and `μ(ρ₀)`.
#[derive(Clone, Debug)]
pub struct DensityState {
    pub rho0: CoefficientField,
    pub mu: CoefficientField,
    pub law: ViscosityLaw,
}

impl DensityState {
    pub fn new(rho0: CoefficientField, law: ViscosityLaw) -> Result<Self> {
        let rb = rho0.bar;
        let mu = rho0
            .compose(|r| law.eval(r, rb))
            .map_err(|_| Error::InvalidInput("viscosity law is not positive on the density range".into()))?;
        Ok(Self { rho0, mu, law })
    }

    /// `1/ρ₀`.
    pub fn specific_volume(&self) -> Result<CoefficientField> {
        self.rho0.compose(|r| 1.0 / r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NsConfig {
    pub dt: f64,
    pub horizon: f64,
    pub tol: f64,
    pub alpha: f64,
    pub radius: f64,
    pub p: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub min_horizon: f64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 0.1, tol: 1e-10, alpha: 0.01, radius: 0.01, p: 2.0, max_outer: 50, max_inner: 200, min_horizon: 1e-3 }
    }
}

impl NsConfig {
    fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    fn stokes(&self) -> StokesConfig {
        StokesConfig { tol: self.tol, max_picard: self.max_inner, homotopy_eps0: 1.0, p: self.p, three_step: false, ..StokesConfig::default() }
    }
}

/// `μ A D_A(w)` on the grid, with `D_A(w) = Dw·A + (Dw·A)^T`.
fn transported_stress(w: &SpectralField, a: &Phys, mu: &Phys) -> Phys {
    let n = w.dim();
    let ja = mat_mul(&w.gradient().to_phys(), a, n);
    let da = ja.add(&transpose(&ja, n));
    mat_mul(a, &da, n).mul(mu)
}

/// `F_v̄(w, ∇Q) = div(μ A D_A(w) − μ D(w)) + (Id − A^T)∇Q`.
pub fn lagrangian_forcing(w: &SpectralField, grad_q: &SpectralField, flow: &FlowState, mu: &Phys) -> SpectralField {
    let n = w.dim();
    let stress = transported_stress(w, &flow.a, mu).sub(&deformation_tensor(w).to_phys().mul(mu));
    let at = transpose(&flow.a, n);
    let gq = grad_q.to_phys();
    let pressure = gq.sub(&mat_vec(&at, &gq, n));
    stress.to_spectral().divergence().add(&pressure.to_spectral())
}

/// `(Id − A)w`.
fn constraint_field(w: &SpectralField, flow: &FlowState) -> SpectralField {
    let n = w.dim();
    let wp = w.to_phys();
    wp.sub(&mat_vec(&flow.a, &wp, n)).to_spectral()
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    /// `ū = u_L + ũ`.
    pub u: Trajectory,
    pub grad_p: Trajectory,
    pub tilde_u: Trajectory,
    pub tilde_p: Trajectory,
    pub iterations: usize,
    pub contraction: f64,
}

struct Reference {
    u: Trajectory,
    grad_p: Trajectory,
}

/// Fixed point of `Φ` for the transport velocity whose flows are `flows`,
/// realized together with the variable-coefficient Stokes iteration: each
/// sweep is one constant-coefficient solve with forcing
/// `(1/ρ₀)F_v̄(u_L + ũ, ∇P_L + ∇P̃) + g(ũ, ∇P̃)` and constraint field
/// `(Id − A)(u_L + ũ)`, where `g` carries the variable Stokes coefficients.
fn phi_fixed_point(
    rho: &DensityState,
    flows: &[FlowState],
    lin: &Reference,
    start: Option<(Trajectory, Trajectory)>,
    tol: f64,
    max_iter: usize,
    p: f64,
) -> Result<(Trajectory, Trajectory, usize, f64)> {
    let sp = lin.u.fields[0].space().clone();
    let n = sp.dim();
    let steps = lin.u.steps();
    let dt = lin.u.dt;
    let a = rho.specific_volume()?;
    let (ap, bp) = (a.phys().clone(), rho.mu.phys().clone());
    let (abar, bbar) = (a.bar, rho.mu.bar);
    let dev = ap.map(|v| abar - v);
    let (mut u, mut gp) = start.unwrap_or_else(|| (Trajectory::zeros(&sp, n, steps, dt), Trajectory::zeros(&sp, n, steps, dt)));
    let scale = energy_norm(&lin.u, &lin.grad_p, p);
    let mut prev = f64::NAN;
    let mut contraction: f64 = 0.0;
    let mut rising = 0;
    for k in 1..=max_iter {
        let mut forcing = Vec::with_capacity(steps + 1);
        let mut r = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let w = lin.u.fields[i].add(&u.fields[i]);
            let q = lin.grad_p.fields[i].add(&gp.fields[i]);
            let f = lagrangian_forcing(&w, &q, &flows[i], &bp).to_phys().mul(&ap).to_spectral();
            let g = gp.fields[i]
                .to_phys()
                .mul(&dev)
                .to_spectral()
                .add(&viscous_term(&u.fields[i], &ap, &bp))
                .sub(&deformation_tensor(&u.fields[i]).divergence().scale(abar * bbar));
            forcing.push(f.add(&g));
            r.push(constraint_field(&w, &flows[i]));
        }
        let r = Trajectory::new(dt, r);
        let data = StokesData::new(SpectralField::zeros(&sp, n), Trajectory::new(dt, forcing), r)?;
        let sol = crate::stokes::constant_stokes_solve(&data, abar, bbar)?;
        let upd = energy_norm(&sol.u.sub(&u), &sol.grad_p.sub(&gp), p);
        let size = energy_norm(&sol.u, &sol.grad_p, p);
        u = sol.u;
        gp = sol.grad_p;
        if prev.is_finite() && prev > 0.0 {
            let ratio = upd / prev;
            contraction = if k == 2 { ratio } else { contraction.max(ratio) };
            rising = if ratio > 0.95 { rising + 1 } else { 0 };
        }
        if upd <= tol * (size + scale) || size == 0.0 {
            return Ok((u, gp, k, contraction));
        }
        if !upd.is_finite() || rising >= 3 {
            break;
        }
        prev = upd;
    }
    Err(Error::LinearFixedPointFailed { contraction })
}

fn reference_solve(rho: &DensityState, u0: &SpectralField, steps: usize, cfg: &NsConfig) -> Result<Reference> {
    let a = rho.specific_volume()?;
    let data = StokesData::free(u0.clone(), steps, cfg.dt)?;
    let sol = variable_stokes_solve(&data, &a, &rho.mu, &cfg.stokes())?;
    Ok(Reference { u: sol.u, grad_p: sol.grad_p })
}

/// Solves the linear Lagrangian system with frozen transport velocity `v`
/// (sampled on the solver time grid) by the fixed point of `Φ` around the
/// reference solution `u_L`.
pub fn linear_lagrangian_solve(rho: &DensityState, v: &Trajectory, u0: &SpectralField, cfg: &NsConfig) -> Result<LinearSolution> {
    if u0.clone().without_mean().divergence().l2_norm() > 1e-10 * u0.gradient().l2_norm().max(1e-300) {
        return Err(Error::InvalidInput("u0 must be divergence-free".into()));
    }
    let gate = smallness(v, cfg.p);
    if gate > 2.0 * cfg.alpha {
        return Err(Error::InvalidInput(format!("transport velocity too large: {gate:.3e} > 2α")));
    }
    let steps = v.steps();
    let lin = reference_solve(rho, u0, steps, cfg)?;
    let flows = flow_trajectory(v)?;
    let (tu, tp, iterations, contraction) = phi_fixed_point(rho, &flows, &lin, None, cfg.tol, cfg.max_inner, cfg.p)?;
    Ok(LinearSolution { u: lin.u.add(&tu), grad_p: lin.grad_p.add(&tp), tilde_u: tu, tilde_p: tp, iterations, contraction })
}

#[derive(Clone, Debug)]
pub struct NsSolution {
    pub u: Trajectory,
    pub grad_p: Trajectory,
    pub u_l: Trajectory,
    pub grad_p_l: Trajectory,
    pub flows: Vec<FlowState>,
    pub horizon: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Largest ratio of successive `F_T` updates of the outer iteration.
    pub contraction: f64,
    pub updates: Vec<f64>,
    pub traces: Vec<NormTrace>,
}

impl NsSolution {
    /// Grid max of `|div(A_ū ū)|` over the stored times, relative to
    /// `max|∇ū|`.
    pub fn constraint_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (u, f) in self.u.fields.iter().zip(&self.flows) {
            let n = u.dim();
            let d = mat_vec(&f.a, &u.to_phys(), n).to_spectral().divergence().l2_norm();
            let s = u.gradient().l2_norm();
            if s > 0.0 {
                worst = worst.max(d / s);
            }
        }
        worst
    }

    pub fn det_defect(&self) -> f64 {
        self.flows.iter().map(|f| f.det_defect()).fold(0.0, f64::max)
    }
}

/// Solves the Lagrangian Navier–Stokes system by the outer fixed point
/// `(ṽ, ∇Q̃) ↦ S(ṽ, ∇Q̃)`, each evaluation being the linear problem with
/// transport velocity `u_L + ṽ`.
pub fn nonlinear_solve(rho: &DensityState, u0: &SpectralField, cfg: &NsConfig) -> Result<NsSolution> {
    let n = u0.dim();
    if n != rho.rho0.space().dim() {
        return Err(Error::GridMismatch);
    }
    let lo = if n == 3 { 1.2 } else { 1.0 };
    if !(cfg.p > lo && cfg.p < 4.0) {
        return Err(Error::InvalidExponents(format!("p = {} outside ({lo}, 4)", cfg.p)));
    }
    let sp = u0.space().clone();
    let mut steps = cfg.steps();
    let (lin, steps) = loop {
        let lin = reference_solve(rho, u0, steps, cfg)?;
        let vi = BesovIndex { s: n as f64 / cfg.p - 1.0, p: cfg.p, r: 1.0 };
        let grad: Vec<f64> = lin.u.fields.iter().map(|x| besov_norm(&x.gradient(), vi).powi(2)).collect();
        let tr = solution_traces(&lin.u, &lin.grad_p, cfg.p);
        let size = crate::lagrange::trapezoid(&grad, cfg.dt).sqrt() + tr[1].total();
        if size <= cfg.alpha {
            break (lin, steps);
        }
        if steps < 2 || (steps / 2) as f64 * cfg.dt < cfg.min_horizon {
            return Err(Error::NoAdmissibleHorizon { horizon: (steps / 2) as f64 * cfg.dt });
        }
        steps /= 2;
    };
    let dt = cfg.dt;
    let zero = Trajectory::zeros(&sp, n, steps, dt);
    if u0.max_abs_coefficient() == 0.0 {
        let flows = flow_trajectory(&zero)?;
        let traces = solution_traces(&zero, &zero, cfg.p);
        return Ok(NsSolution { u: zero.clone(), grad_p: zero.clone(), u_l: zero.clone(), grad_p_l: zero, flows, horizon: steps as f64 * dt, outer_iterations: 0, inner_iterations: 0, contraction: 0.0, updates: Vec::new(), traces });
    }
    let (mut v, mut q) = (zero.clone(), zero);
    let mut updates = Vec::new();
    let mut inner = 0;
    let mut inner_tol = cfg.tol;
    let mut converged = false;
    let mut outer = 0;
    for k in 1..=cfg.max_outer {
        outer = k;
        let transport = lin.u.add(&v);
        if smallness(&transport, cfg.p) > 2.0 * cfg.alpha {
            return Err(Error::NonlinearFixedPointFailed { contraction: f64::NAN });
        }
        let flows = flow_trajectory(&transport)?;
        let (nv, nq, it, _) = phi_fixed_point(rho, &flows, &lin, Some((v.clone(), q.clone())), inner_tol, cfg.max_inner, cfg.p)?;
        inner += it;
        let upd = energy_norm(&nv.sub(&v), &nq.sub(&q), cfg.p);
        let size = energy_norm(&nv, &nq, cfg.p);
        v = nv;
        q = nq;
        updates.push(upd);
        if size > cfg.radius {
            return Err(Error::NonlinearFixedPointFailed { contraction: f64::INFINITY });
        }
        if upd <= cfg.tol * size.max(energy_norm(&lin.u, &lin.grad_p, cfg.p)) {
            converged = true;
            break;
        }
        inner_tol = cfg.tol.min(0.01 * upd / size.max(f64::MIN_POSITIVE));
    }
    let contraction = outer_contraction(&updates, cfg.tol * energy_norm(&lin.u, &lin.grad_p, cfg.p));
    if !converged {
        return Err(Error::NonlinearFixedPointFailed { contraction });
    }
    let u = lin.u.add(&v);
    let grad_p = lin.grad_p.add(&q);
    let flows = flow_trajectory(&u)?;
    let traces = solution_traces(&u, &grad_p, cfg.p);
    Ok(NsSolution { u, grad_p, u_l: lin.u, grad_p_l: lin.grad_p, flows, horizon: steps as f64 * dt, outer_iterations: outer, inner_iterations: inner, contraction, updates, traces })
}

/// Largest ratio of successive updates while both are above the noise
/// floor `100·floor`.
fn outer_contraction(updates: &[f64], floor: f64) -> f64 {
    let mut c: f64 = 0.0;
    for w in updates.windows(2) {
        if w[0] > 0.0 && w[1] > 100.0 * floor {
            c = c.max(w[1] / w[0]);
        }
    }
    if c == 0.0 && updates.len() >= 2 && updates[0] > 0.0 {
        c = updates[1] / updates[0];
    }
    c
}

/// `‖u‖_{L^∞_T} + ‖(∇²u, ∇P)‖_{L¹_T} ≤ ‖u0‖e^{CT}`, in `Ḃ^{n/p−1}_{p,1}`;
/// reports the smallest such `C`.
pub fn ns_estimate_check(sol: &NsSolution, u0: &SpectralField, p: f64) -> EstimateReport {
    let n = u0.dim();
    let vi = BesovIndex { s: n as f64 / p - 1.0, p, r: 1.0 };
    let sup = sol.u.fields.iter().map(|x| besov_norm(x, vi)).fold(0.0, f64::max);
    let vals: Vec<f64> = sol.u.fields.iter().zip(&sol.grad_p.fields).map(|(u, g)| besov_norm(&u.gradient().gradient(), vi) + besov_norm(g, vi)).collect();
    let l1 = crate::besov::running_lq(&sol.u.times(), &vals, 1.0).last().cloned().unwrap_or(0.0);
    let lhs = sup + l1;
    let base = besov_norm(u0, vi);
    let c = if base > 0.0 && sol.horizon > 0.0 { (lhs / base).ln() / sol.horizon } else { f64::NAN };
    EstimateReport::new("ns_estimate", json!({"lhs": lhs, "u0": base, "horizon": sol.horizon, "p": p, "constant": finite_or_null(c)}), c, *u0.space().grid())
        .with_pass(c.is_finite() || base == 0.0)
}

/// `ρ₀∂tū − div(μ A D_A(ū)) + A^T∇P̄` in `L²` at every interior time node,
/// with centered time differences.
pub fn residual_check(sol: &NsSolution, rho: &DensityState) -> Vec<f64> {
    let m = sol.u.steps();
    let dt = sol.u.dt;
    let mu = rho.mu.phys();
    let r0 = rho.rho0.phys();
    let mut out = Vec::new();
    for i in 1..m {
        let u = &sol.u.fields[i];
        let n = u.dim();
        let f = &sol.flows[i];
        let dtu = sol.u.fields[i + 1].sub(&sol.u.fields[i - 1]).scale(0.5 / dt).to_phys().mul(r0).to_spectral();
        let stress = transported_stress(u, &f.a, mu).to_spectral().divergence();
        let gp = mat_vec(&transpose(&f.a, n), &sol.grad_p.fields[i].to_phys(), n).to_spectral();
        out.push(dtu.sub(&stress).add(&gp).l2_norm());
    }
    out
}

/// Eulerian density, velocity and pressure gradient.
#[derive(Clone, Debug)]
pub struct EulerianState {
    pub rho: SpectralField,
    pub u: SpectralField,
    pub grad_p: SpectralField,
}

/// `ρ = ρ₀∘X^{-1}`, `u = ū∘X^{-1}`, `∇P = (A^T∇P̄)∘X^{-1}` at one time.
pub fn to_eulerian(u_bar: &SpectralField, grad_p_bar: &SpectralField, flow: &FlowState, rho0: &SpectralField) -> Result<EulerianState> {
    let n = u_bar.dim();
    let inv = inverse_flow(flow)?;
    let gp = mat_vec(&transpose(&flow.a, n), &grad_p_bar.to_phys(), n).to_spectral();
    Ok(EulerianState {
        rho: compose(rho0, &inv.disp).to_spectral(),
        u: compose(u_bar, &inv.disp).to_spectral(),
        grad_p: compose(&gp, &inv.disp).to_spectral(),
    })
}

#[derive(Clone, Debug)]
pub struct EulerianSolution {
    pub rho: Vec<SpectralField>,
    pub u: Trajectory,
    pub grad_p: Trajectory,
    pub substeps: usize,
}

/// Pseudo-spectral solver of the Eulerian system: integrating factor for
/// `ν̄Δu` with `ν̄ = mean(μ(ρ₀)/ρ₀)`, Heun's method for the remaining terms,
/// pressure from `div(ρ^{-1}∇P) = div f` at every stage, density transported
/// with the same stages. Steps are halved while `dt·max|u|/h > 1/2`.
pub fn eulerian_reference_solve(rho: &DensityState, u0: &SpectralField, horizon: f64, dt: f64) -> Result<EulerianSolution> {
    let sp = u0.space().clone();
    let n = sp.dim();
    let steps = (horizon / dt).round().max(1.0) as usize;
    let law = rho.law;
    let rb = rho.rho0.bar;
    let nu = rho.mu.phys().values().iter().zip(rho.rho0.phys().values()).map(|(m, r)| m / r).sum::<f64>() / sp.grid().points() as f64;
    let h = sp.grid().spacing();
    let rhs = |u: &SpectralField, r: &SpectralField| -> Result<(SpectralField, SpectralField, SpectralField)> {
        let up = u.to_phys();
        let rp = r.to_phys();
        let inv = rp.map(|v| 1.0 / v);
        let mu = rp.map(|v| law.eval(v, rb));
        let adv = mat_vec(&u.gradient().to_phys(), &up, n).scale(-1.0).to_spectral();
        let visc = deformation_tensor(u).to_phys().mul(&mu).to_spectral().divergence().to_phys().mul(&inv).to_spectral();
        let f = adv.add(&visc).sub(&u.laplacian().scale(nu));
        let a = CoefficientField::from_phys(&inv)?;
        let gp = solve_pressure(&a, &f.clone().without_mean(), 1e-13)?.grad_p;
        let du = f.sub(&gp.to_phys().mul(&inv).to_spectral());
        let gr = r.gradient().to_phys();
        let mut adv_r = Phys::zeros(&sp, 1);
        for d in 0..n {
            let (g, v) = (gr.comp(d), up.comp(d));
            for (o, (x, y)) in adv_r.values_mut().iter_mut().zip(g.iter().zip(v)) {
                *o -= x * y;
            }
        }
        Ok((du, adv_r.to_spectral(), gp))
    };
    let mut sub = 1usize;
    'retry: loop {
        let k = dt / sub as f64;
        let decay: Vec<f64> = sp.xi_abs().iter().map(|x| (-nu * x * x * k).exp()).collect();
        let ef = |u: &SpectralField| u.masked(&decay);
        let mut u = u0.clone();
        let mut r = rho.rho0.values.clone();
        let (_, _, gp0) = rhs(&u, &r)?;
        let mut us = vec![u.clone()];
        let mut rs = vec![r.clone()];
        let mut gps = vec![gp0];
        for step in 0..steps * sub {
            let umax = u.to_phys().magnitude().into_iter().fold(0.0, f64::max);
            if k * umax / h > 0.5 {
                sub *= 2;
                if sub > 1 << 12 {
                    return Err(Error::StepRejected { dt: k });
                }
                continue 'retry;
            }
            let (du, dr, _) = rhs(&u, &r)?;
            let u1 = ef(&u.add(&du.scale(k)));
            let r1 = r.add(&dr.scale(k));
            let (du1, dr1, _) = rhs(&u1, &r1)?;
            u = ef(&u).add(&ef(&du).add(&du1).scale(0.5 * k));
            r = r.add(&dr.add(&dr1).scale(0.5 * k));
            if (step + 1) % sub == 0 {
                let (_, _, gp) = rhs(&u, &r)?;
                us.push(u.clone());
                rs.push(r.clone());
                gps.push(gp);
            }
        }
        return Ok(EulerianSolution { rho: rs, u: Trajectory::new(dt, us), grad_p: Trajectory::new(dt, gps), substeps: sub });
    }
}
