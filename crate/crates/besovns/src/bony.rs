//! Paraproducts, remainder, Bony decomposition and the commutators used by
//! the pressure and velocity estimates.

use serde_json::json;

use crate::besov::{self, block, lp_norm, BesovIndex};
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::spectral::{apply_multiplier, low_cutoff, Phys, SpectralField, Symbol};

/// `uv = Ṫ_u v + Ṫ_v u + Ṙ(u, v)`.
#[derive(Clone, Debug)]
pub struct BonySplit {
    pub t_uv: SpectralField,
    pub t_vu: SpectralField,
    pub r_uv: SpectralField,
}

impl BonySplit {
    pub fn sum(&self) -> SpectralField {
        self.t_uv.add(&self.t_vu).add(&self.r_uv)
    }
}

fn check_pair(u: &SpectralField, v: &SpectralField) -> Result<()> {
    u.same_space(v)?;
    if u.comps() != 1 {
        return Err(Error::Components { expected: 1, found: u.comps() });
    }
    Ok(())
}

fn low(u: &SpectralField, j: i32) -> SpectralField {
    let part = u.space().partition();
    low_cutoff(u, j.clamp(part.j_min - 1, part.j_max + 1)).expect("clamped cutoff index")
}

fn accumulate(acc: &mut Option<Phys>, term: Phys) {
    match acc {
        Some(a) => {
            for (x, y) in a.values_mut().iter_mut().zip(term.values()) {
                *x += y;
            }
        }
        None => *acc = Some(term),
    }
}

/// `Ṫ_u v = Σ_j Ṡ_{j−1}u · Δ̇_j v` with `u` scalar, products dealiased.
pub fn paraproduct(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    check_pair(u, v)?;
    let part = u.space().partition();
    let mut acc = None;
    for j in part.shells() {
        let lo = low(u, j - 1);
        if lo.max_abs_coefficient() == 0.0 {
            continue;
        }
        let vj = block(v, j);
        accumulate(&mut acc, lo.to_phys().mul(&vj.to_phys()));
    }
    Ok(match acc {
        Some(p) => p.to_spectral(),
        None => SpectralField::zeros(v.space(), v.comps()),
    })
}

/// `Ṙ(u, v) = Σ_j Δ̇_j u · Δ̃_j v`, `Δ̃_j = Δ̇_{j−1} + Δ̇_j + Δ̇_{j+1}`.
pub fn remainder(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    check_pair(u, v)?;
    let part = u.space().partition();
    let mut acc = None;
    for j in part.shells() {
        let uj = block(u, j);
        if uj.max_abs_coefficient() == 0.0 {
            continue;
        }
        let vj = block(v, j - 1).add(&block(v, j)).add(&block(v, j + 1));
        accumulate(&mut acc, uj.to_phys().mul(&vj.to_phys()));
    }
    Ok(match acc {
        Some(p) => p.to_spectral(),
        None => SpectralField::zeros(v.space(), v.comps()),
    })
}

pub fn bony_split(u: &SpectralField, v: &SpectralField) -> Result<BonySplit> {
    check_pair(v, u)?;
    Ok(BonySplit { t_uv: paraproduct(u, v)?, t_vu: paraproduct(v, u)?, r_uv: remainder(u, v)? })
}

/// Relative L² defect between the Bony sum and the dealiased product.
pub fn reconstruction_defect(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    let split = bony_split(u, v)?;
    let direct = u.product(v);
    let scale = direct.l2_norm().max(f64::MIN_POSITIVE);
    Ok(split.sum().sub(&direct).l2_norm() / scale)
}

/// `[Δ̇_j, a]b = Δ̇_j(ab) − aΔ̇_j b`.
pub fn block_commutator(a: &SpectralField, b: &SpectralField, j: i32) -> Result<SpectralField> {
    check_pair(a, b)?;
    a.space().partition().check(j)?;
    let ab = a.product(b);
    Ok(block(&ab, j).sub(&a.product(&block(b, j))))
}

/// `2^j‖[Δ̇_j, a]b‖_{L^r} / (‖∇a‖_{L^p}‖b‖_{L^q})` with `1/r = 1/p + 1/q`.
pub fn block_commutator_ratio(a: &SpectralField, b: &SpectralField, j: i32, p: f64, q: f64, r: f64) -> Result<f64> {
    if ((1.0 / r) - (1.0 / p + 1.0 / q)).abs() > 1e-12 {
        return Err(Error::InvalidExponents(format!("1/{r} ≠ 1/{p} + 1/{q}")));
    }
    let c = block_commutator(a, b, j)?;
    let denom = lp_norm(&a.gradient(), p) * lp_norm(b, q);
    Ok(if denom > 0.0 { (j as f64).exp2() * lp_norm(&c, r) / denom } else { 0.0 })
}

/// `[A(D), a]w = A(D)(aw) − a·A(D)w` for a degree-0 symbol.
pub fn multiplier_commutator(symbol: &Symbol<'_>, a: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
    if symbol.degree != 0.0 {
        return Err(Error::InvalidSymbol(format!("degree {} is not 0", symbol.degree)));
    }
    check_pair(a, w)?;
    Ok(apply_multiplier(symbol, &a.product(w))?.sub(&a.product(&apply_multiplier(symbol, w)?)))
}

/// `[A(D), Ṫ_a]w = A(D)Ṫ_a w − Ṫ_a A(D)w`, together with the per-shell
/// sequence `2^{j(s+1)}‖Δ̇_j[A(D), Ṫ_a]w‖_{L^p}`.
pub fn paraproduct_commutator(symbol: &Symbol<'_>, a: &SpectralField, w: &SpectralField, s: f64, p: f64) -> Result<(SpectralField, Vec<(i32, f64)>)> {
    if symbol.degree != 0.0 {
        return Err(Error::InvalidSymbol(format!("degree {} is not 0", symbol.degree)));
    }
    let c = apply_multiplier(symbol, &paraproduct(a, w)?)?.sub(&paraproduct(a, &apply_multiplier(symbol, w)?)?);
    let seq = besov::shell_norms(&c, p)
        .into_iter()
        .map(|(j, v)| (j, (j as f64 * (s + 1.0)).exp2() * v))
        .collect();
    Ok((c, seq))
}

/// Measured constant in `‖fg‖_{Ḃ^{n/p−ν1−ν2}_{p,1}} ≤ C‖f‖_{Ḃ^{n/p−ν1}_{p,1}}‖g‖_{Ḃ^{n/p−ν2}_{p,1}}`.
pub fn product_estimate_check(f: &SpectralField, g: &SpectralField, nu1: f64, nu2: f64, p: f64) -> Result<EstimateReport> {
    check_pair(f, g)?;
    let n = f.dim() as f64;
    let np = n / p;
    let npc = n / besov::conjugate(p);
    if nu1 < 0.0 || nu2 < 0.0 || nu1 + nu2 >= np + np.min(npc) {
        return Err(Error::InvalidExponents(format!("(ν1, ν2) = ({nu1}, {nu2}) outside the product gate at p = {p}")));
    }
    let lhs = besov::besov_norm(&f.product(g), BesovIndex::new(np - nu1 - nu2, p, 1.0)?);
    let rhs = besov::besov_norm(f, BesovIndex::new(np - nu1, p, 1.0)?) * besov::besov_norm(g, BesovIndex::new(np - nu2, p, 1.0)?);
    let c = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(EstimateReport::new("product", json!({"nu1": nu1, "nu2": nu2, "p": p, "lhs": lhs, "rhs": rhs}), c, *f.space().grid()))
}

/// Measured constant in `‖Ṫ_f g‖_{Ḃ^s_{p,r}} ≤ C‖f‖_{L^∞}‖g‖_{Ḃ^s_{p,r}}`.
pub fn paraproduct_bound(f: &SpectralField, g: &SpectralField, idx: BesovIndex) -> Result<EstimateReport> {
    let t = paraproduct(f, g)?;
    let lhs = besov::besov_norm(&t, idx);
    let rhs = f.to_phys().lp_norm(f64::INFINITY) * besov::besov_norm(g, idx);
    let c = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(EstimateReport::new("paraproduct_linf", json!({"s": idx.s, "p": idx.p, "r": idx.r, "lhs": lhs, "rhs": rhs}), c, *f.space().grid()))
}

/// Measured constant in `‖Ṙ(f,g)‖_{Ḃ^{s1+s2}_{p,r}} ≤ C‖f‖_{Ḃ^{s1}_{p,r}}‖g‖_{Ḃ^{s2}_{p,r}}`.
pub fn remainder_bound(f: &SpectralField, g: &SpectralField, s1: f64, s2: f64, p: f64, r: f64) -> Result<EstimateReport> {
    let rem = remainder(f, g)?;
    let lhs = besov::besov_norm(&rem, BesovIndex::new(s1 + s2, p, r)?);
    let rhs = besov::besov_norm(f, BesovIndex::new(s1, p, r)?) * besov::besov_norm(g, BesovIndex::new(s2, p, r)?);
    let c = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(EstimateReport::new("remainder", json!({"s1": s1, "s2": s2, "p": p, "r": r, "lhs": lhs, "rhs": rhs}), c, *f.space().grid()))
}

/// One-derivative gain of `[A(D), a]w`:
/// `‖[A(D),a]w‖_{Ḃ^{s+1}_{p,r}} / (‖∇a‖_{Ḃ^{n/p−ν}_{p,r1}}‖w‖_{Ḃ^{s+ν}_{p,r2}})`
/// and the no-gain bound `‖a − ā‖_{L^∞}‖w‖_{Ḃ^{s+1}_{p,r}}`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CommutatorGain {
    pub commutator_norm: f64,
    pub gain_ratio: f64,
    pub no_gain_bound: f64,
}

pub fn commutator_gain(symbol: &Symbol<'_>, a: &SpectralField, w: &SpectralField, s: f64, nu: f64, p: f64) -> Result<CommutatorGain> {
    let c = multiplier_commutator(symbol, a, w)?;
    let n = a.dim() as f64;
    let commutator_norm = besov::besov_norm(&c, BesovIndex::new(s + 1.0, p, 1.0)?);
    let denom = besov::besov_norm(&a.gradient(), BesovIndex::new(n / p - nu, p, 1.0)?) * besov::besov_norm(w, BesovIndex::new(s + nu, p, 1.0)?);
    let osc = a.clone().without_mean().to_phys().lp_norm(f64::INFINITY);
    let no_gain_bound = osc * besov::besov_norm(w, BesovIndex::new(s + 1.0, p, 1.0)?);
    Ok(CommutatorGain {
        commutator_norm,
        gain_ratio: if denom > 0.0 { commutator_norm / denom } else { 0.0 },
        no_gain_bound,
    })
}
