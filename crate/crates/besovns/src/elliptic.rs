//! The pressure equation `div(a∇P) = div f` with a variable scalar
//! coefficient, and the L² / Besov estimate checks.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::besov::{besov_norm, BesovIndex};
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::spectral::{random_field, FieldSpectrum, Phys, Space, SpectralField, C64};

/// Scalar coefficient with constant state `ā` (its mean) and grid bounds
/// `0 < a★ ≤ a ≤ a*`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub values: SpectralField,
    pub bar: f64,
    pub lower: f64,
    pub upper: f64,
    phys: Phys,
}

impl CoefficientField {
    /// From grid samples; the field is truncated to the band first and the
    /// bounds are measured on the truncated samples.
    pub fn from_phys(p: &Phys) -> Result<Self> {
        Self::from_spectral(p.to_spectral())
    }

    pub fn from_spectral(values: SpectralField) -> Result<Self> {
        if values.comps() != 1 {
            return Err(Error::Components { expected: 1, found: values.comps() });
        }
        let phys = values.to_phys();
        let lower = phys.min();
        let upper = phys.max();
        if !(lower > 0.0) {
            return Err(Error::InvalidInput(format!("coefficient not bounded below by a positive constant (min {lower:.3e})")));
        }
        let bar = values.mean()[0];
        Ok(Self { values, bar, lower, upper, phys })
    }

    pub fn constant(space: &Space, value: f64) -> Result<Self> {
        Self::from_spectral(SpectralField::constant(space, value))
    }

    /// `ā(1 + osc·w)` with `w` a random mean-zero field normalized to unit
    /// grid maximum.
    pub fn random<R: Rng + ?Sized>(space: &Space, bar: f64, oscillation: f64, spectrum: FieldSpectrum, rng: &mut R) -> Result<Self> {
        let w = random_field(space, 1, spectrum, rng);
        let peak = w.to_phys().lp_norm(f64::INFINITY);
        let w = if peak > 0.0 { w.scale(oscillation * bar / peak) } else { w };
        Self::from_spectral(w.add(&SpectralField::constant(space, bar)))
    }

    pub fn space(&self) -> &Space {
        self.values.space()
    }

    pub fn phys(&self) -> &Phys {
        &self.phys
    }

    /// `a − ā`.
    pub fn deviation(&self) -> SpectralField {
        self.values.clone().without_mean()
    }

    /// `max|a − ā|` on the grid.
    pub fn oscillation(&self) -> f64 {
        self.phys.values().iter().map(|v| (v - self.bar).abs()).fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.values.coefficients()[1..].iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// Pointwise composition `F(a)`, truncated to the band.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_phys(&self.phys.map(f))
    }

    /// `(1 − θ)ā + θa`.
    pub fn interpolate(&self, theta: f64) -> Result<Self> {
        let c = SpectralField::constant(self.space(), self.bar);
        Self::from_spectral(c.lincomb(1.0 - theta, &self.values, theta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PressureMethod {
    Neumann,
    Relaxed,
    Krylov,
}

#[derive(Clone, Debug)]
pub struct PressureSolution {
    pub grad_p: SpectralField,
    /// `‖div(a∇P) − div f‖_{L²} / ‖div f‖_{L²}`.
    pub residual: f64,
    pub iterations: usize,
    pub contraction_estimate: f64,
    pub method: PressureMethod,
}

pub const MAX_ITER: usize = 10_000;

fn residual_of(a: &CoefficientField, g: &SpectralField, f: &SpectralField, div_f: f64) -> f64 {
    let flux = g.to_phys().mul(a.phys()).to_spectral();
    flux.sub(f).divergence().without_mean().l2_norm() / div_f
}

/// Neumann iteration `∇P ← c⁻¹Q(f − (a − c)∇P)` with constant `c`; returns
/// `None` once the measured contraction exceeds 0.9.
fn neumann(a: &CoefficientField, f: &SpectralField, qf: &SpectralField, c: f64, tol: f64, div_f: f64, give_up: bool) -> Result<(Option<SpectralField>, f64, usize)> {
    let dev = a.phys().map(|v| v - c);
    let mut g = qf.scale(1.0 / c);
    let mut prev_res = f64::NAN;
    let mut contraction: f64 = 0.0;
    for k in 1..=MAX_ITER {
        let prod = g.to_phys().mul(&dev).to_spectral();
        let res = g.scale(c).add(&prod).sub(f).divergence().without_mean().l2_norm() / div_f;
        if res <= tol {
            return Ok((Some(g), contraction, k - 1));
        }
        if prev_res.is_finite() && prev_res > 0.0 {
            let ratio = res / prev_res;
            contraction = if k <= 2 { ratio } else { contraction.max(ratio) };
            if give_up && k >= 3 && (ratio > 0.9 || !res.is_finite()) {
                return Ok((None, contraction, k));
            }
        }
        prev_res = res;
        g = f.sub(&prod).without_mean().gradient_part()?.scale(1.0 / c);
    }
    Ok((None, contraction, MAX_ITER))
}

/// Preconditioned conjugate gradients for `−div(a∇P) = −div f` on the band.
fn krylov(a: &CoefficientField, f: &SpectralField, tol: f64, div_f: f64) -> Result<(SpectralField, usize)> {
    let space = a.space().clone();
    let apply = |p: &SpectralField| -> SpectralField {
        let flux = p.gradient().to_phys().mul(a.phys()).to_spectral();
        flux.divergence().scale(-1.0).without_mean()
    };
    let c = 0.5 * (a.lower + a.upper);
    let precond = |r: &SpectralField| -> SpectralField {
        r.multiplier(|x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            C64::new(if r2 == 0.0 { 0.0 } else { 1.0 / (c * r2) }, 0.0)
        })
    };
    let b = f.divergence().scale(-1.0).without_mean();
    let bn = b.l2_norm();
    let mut x = SpectralField::zeros(&space, 1);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.inner(&z);
    for k in 1..=MAX_ITER {
        let ap = apply(&p);
        let alpha = rz / p.inner(&ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        if r.l2_norm() <= 0.1 * tol * bn {
            let g = x.gradient();
            if residual_of(a, &g, f, div_f) <= tol {
                return Ok((g, k));
            }
        }
        z = precond(&r);
        let rz_new = r.inner(&z);
        p = z.add(&p.scale(rz_new / rz));
        rz = rz_new;
        if !rz.is_finite() {
            break;
        }
    }
    let g = x.gradient();
    Err(Error::EllipticStagnation { residual: residual_of(a, &g, f, div_f) })
}

/// Solves `div(a∇P) = div f` for `∇P`.
///
/// Runs the Neumann iteration around `ā`; if it stops contracting, retries
/// around `(a★ + a*)/2` and finally falls back to preconditioned conjugate
/// gradients.
pub fn solve_pressure(a: &CoefficientField, f: &SpectralField, tol: f64) -> Result<PressureSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    f.same_space(&a.values)?;
    f.require_mean_zero()?;
    let qf = f.gradient_part()?;
    let div_f = f.divergence().l2_norm();
    if div_f <= 1e-13 * f.gradient().l2_norm() {
        return Ok(PressureSolution {
            grad_p: SpectralField::zeros(f.space(), f.comps()),
            residual: 0.0,
            iterations: 0,
            contraction_estimate: 0.0,
            method: PressureMethod::Neumann,
        });
    }
    if a.is_constant() {
        let g = qf.scale(1.0 / a.bar);
        return Ok(PressureSolution { residual: residual_of(a, &g, f, div_f), grad_p: g, iterations: 1, contraction_estimate: 0.0, method: PressureMethod::Neumann });
    }
    let (g, contraction, iterations) = neumann(a, f, &qf, a.bar, tol, div_f, true)?;
    if let Some(g) = g {
        return Ok(PressureSolution { residual: residual_of(a, &g, f, div_f), grad_p: g, iterations, contraction_estimate: contraction, method: PressureMethod::Neumann });
    }
    let c = 0.5 * (a.lower + a.upper);
    let (g, relaxed, more) = neumann(a, f, &qf, c, tol, div_f, true)?;
    if let Some(g) = g {
        return Ok(PressureSolution { residual: residual_of(a, &g, f, div_f), grad_p: g, iterations: iterations + more, contraction_estimate: relaxed, method: PressureMethod::Relaxed });
    }
    let (g, k) = krylov(a, f, tol, div_f)?;
    Ok(PressureSolution { residual: residual_of(a, &g, f, div_f), grad_p: g, iterations: iterations + more + k, contraction_estimate: contraction, method: PressureMethod::Krylov })
}

/// Contraction factor of the plain Neumann iteration around `ā`, measured
/// over `iters` steps without fallback.
pub fn neumann_contraction(a: &CoefficientField, f: &SpectralField, iters: usize) -> Result<f64> {
    let qf = f.gradient_part()?;
    let div_f = f.divergence().l2_norm();
    if div_f == 0.0 || a.is_constant() {
        return Ok(0.0);
    }
    let dev = a.phys().map(|v| v - a.bar);
    let mut g = qf.scale(1.0 / a.bar);
    let mut prev = f64::NAN;
    let mut ratio = 0.0;
    for _ in 0..iters.max(2) {
        let next = f.sub(&g.to_phys().mul(&dev).to_spectral()).without_mean().gradient_part()?.scale(1.0 / a.bar);
        let upd = next.sub(&g).l2_norm();
        if upd <= 1e-12 * next.l2_norm() {
            break;
        }
        if prev.is_finite() && prev > 0.0 {
            ratio = upd / prev;
        }
        if !upd.is_finite() {
            break;
        }
        prev = upd;
        g = next;
    }
    Ok(ratio)
}

/// `a★‖∇P‖_{L²} ≤ ‖Qf‖_{L²}`; the measured constant is the ratio of the two
/// sides.
pub fn l2_bound_check(a: &CoefficientField, f: &SpectralField, sol: &PressureSolution) -> Result<EstimateReport> {
    let lhs = a.lower * sol.grad_p.l2_norm();
    let rhs = f.gradient_part()?.l2_norm();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    if lhs > (1.0 + 1e-8) * rhs {
        return Err(Error::Diagnostic(format!("a★‖∇P‖ = {lhs:.12e} exceeds ‖Qf‖ = {rhs:.12e}")));
    }
    Ok(EstimateReport::new("elliptic_l2", json!({"lhs": lhs, "rhs": rhs, "slack": rhs - lhs}), ratio, *f.space().grid()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowP,
    HighP,
}

/// Both sides of
/// `‖∇P‖_{Ḃ^{n/p−n/2}_{p,2}} ≲ (1/ā + ‖1/a − 1/ā‖_{Ḃ^{n/q}_{q,1}})(1 + ‖a − ā‖_{Ḃ^{n/q}_{q,1}}/a★)‖Qf‖_{Ḃ^{n/p−n/2}_{p,2}}`
/// and the measured constant.
pub fn besov_bound_check(a: &CoefficientField, f: &SpectralField, sol: &PressureSolution, regime: Regime, p: f64, q: f64) -> Result<EstimateReport> {
    let n = a.space().dim();
    let nf = n as f64;
    let (lo, hi) = match (regime, n) {
        (Regime::LowP, 3) => (1.2, 2.0),
        (Regime::LowP, _) => (1.0, 2.0),
        (Regime::HighP, 3) => (2.0, 6.0),
        (Regime::HighP, _) => (2.0, f64::INFINITY),
    };
    if !(p > lo && p < hi) || !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidRegime(format!("p = {p}, q = {q} outside ({lo}, {hi}) × [1, ∞)")));
    }
    let ok = match regime {
        Regime::LowP => 1.0 / p - 1.0 / q <= 0.5 + 1e-14,
        Regime::HighP => 1.0 / p + 1.0 / q >= 0.5 - 1e-14,
    };
    if !ok {
        return Err(Error::InvalidRegime(format!("(p, q) = ({p}, {q}) violates the {regime:?} constraint")));
    }
    let low = BesovIndex::new(nf / p - nf / 2.0, p, 2.0)?;
    let coef = BesovIndex::new(nf / q, q, 1.0)?;
    let lhs = besov_norm(&sol.grad_p, low);
    let inv = a.compose(|v| 1.0 / v)?;
    let inv_dev = besov_norm(&inv.values, coef);
    let dev = besov_norm(&a.deviation(), coef);
    let qf = besov_norm(&f.gradient_part()?, low);
    let rhs = (1.0 / a.bar + inv_dev) * (1.0 + dev / a.lower) * qf;
    let c = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(EstimateReport::new(
        "elliptic_besov",
        json!({"regime": regime, "p": p, "q": q, "lhs": lhs, "rhs": rhs, "inverse_deviation": inv_dev, "deviation": dev}),
        c,
        *f.space().grid(),
    ))
}

/// `⟨a∇P, ∇ψ⟩ − ⟨∇P, a∇ψ⟩` relative to `‖a∇P‖‖∇ψ‖`.
pub fn self_adjoint_defect(a: &CoefficientField, grad_p: &SpectralField, psi: &SpectralField) -> f64 {
    let gpsi = psi.gradient();
    let lhs = grad_p.to_phys().mul(a.phys()).to_spectral().inner(&gpsi);
    let rhs = grad_p.inner(&gpsi.to_phys().mul(a.phys()).to_spectral());
    let scale = grad_p.l2_norm() * gpsi.l2_norm() * a.upper;
    if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    }
}

/// Uniqueness spot-check in weak form: `⟨a∇P, ∇ψ⟩ = ⟨f, ∇ψ⟩` for a test
/// function `ψ`; returns the relative defect.
pub fn weak_form_defect(a: &CoefficientField, f: &SpectralField, sol: &PressureSolution, psi: &SpectralField) -> f64 {
    let gpsi = psi.gradient();
    let flux = sol.grad_p.to_phys().mul(a.phys()).to_spectral();
    let lhs = flux.inner(&gpsi);
    let rhs = f.inner(&gpsi);
    let scale = flux.l2_norm() * gpsi.l2_norm();
    if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    }
}
