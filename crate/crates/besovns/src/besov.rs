//! Homogeneous Besov norms over the finite dyadic range, space–time norms and
//! the interpolation, embedding, duality and scaling diagnostics.
//!
//! The `k = 0` coefficient never enters a homogeneous norm.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Regularity `s`, Lebesgue exponent `p` and summation exponent `r` of
/// `Ḃ^s_{p,r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct BesovIndex {
    pub s: f64,
    pub p: f64,
    pub r: f64,
}

impl BesovIndex {
    pub fn new(s: f64, p: f64, r: f64) -> Result<Self> {
        let ok = |e: f64| e >= 1.0 && (e.is_finite() || e == f64::INFINITY);
        if !s.is_finite() || !ok(p) || !ok(r) {
            return Err(Error::InvalidIndex(format!("(s, p, r) = ({s}, {p}, {r})")));
        }
        Ok(Self { s, p, r })
    }

    /// Critical velocity index `Ḃ^{n/p−1}_{p,1}`.
    pub fn critical_velocity(n: usize, p: f64) -> Self {
        Self { s: n as f64 / p - 1.0, p, r: 1.0 }
    }

    /// True when `s < n/p`, or `s = n/p` with `r = 1`.
    pub fn banach_gate(&self, n: usize) -> bool {
        let c = n as f64 / self.p;
        self.s < c || ((self.s - c).abs() < 1e-14 && self.r == 1.0)
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..*self }
    }

    /// Hölder conjugate exponents `(s, p, r) ↦ (−s, p′, r′)`.
    pub fn dual(&self) -> Self {
        Self { s: -self.s, p: conjugate(self.p), r: conjugate(self.r) }
    }
}

/// `p′` with `1/p + 1/p′ = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `ℓ^r` norm of a finite sequence.
pub fn lr_sum(values: impl IntoIterator<Item = f64>, r: f64) -> f64 {
    if r.is_infinite() {
        return values.into_iter().fold(0.0, f64::max);
    }
    if r == 1.0 {
        return values.into_iter().sum();
    }
    values.into_iter().map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
}

/// `‖u‖_{L^p}`; `p = 2` by Parseval, otherwise by grid quadrature.
pub fn lp_norm(u: &SpectralField, p: f64) -> f64 {
    if p == 2.0 {
        u.l2_norm()
    } else {
        u.to_phys().lp_norm(p)
    }
}

/// `Δ̇_j u` without range checking; zero outside the dyadic range.
pub(crate) fn block(u: &SpectralField, j: i32) -> SpectralField {
    match u.space().partition().mask(j) {
        Some(m) => u.masked(m),
        None => SpectralField::zeros(u.space(), u.comps()),
    }
}

/// `(j, ‖Δ̇_j u‖_{L^p})` for every shell of the dyadic range.
pub fn shell_norms(u: &SpectralField, p: f64) -> Vec<(i32, f64)> {
    let part = u.space().partition();
    part.shells()
        .map(|j| {
            let m = part.mask(j).unwrap();
            let value = if p == 2.0 {
                let len = u.space().len();
                let vol = u.space().grid().volume();
                let s: f64 = u
                    .coefficients()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % len != 0)
                    .map(|(i, z)| (z * m[i % len]).norm_sqr())
                    .sum();
                (s * vol).sqrt()
            } else {
                u.masked(m).to_phys().lp_norm(p)
            };
            (j, value)
        })
        .collect()
}

/// `ℓ^r` combination of weighted shell norms `2^{js}‖Δ̇_j u‖`.
pub fn combine(shells: &[(i32, f64)], s: f64, r: f64) -> f64 {
    lr_sum(shells.iter().map(|&(j, v)| (j as f64 * s).exp2() * v), r)
}

/// `‖u‖_{Ḃ^s_{p,r}} = ‖(2^{js}‖Δ̇_j u‖_{L^p})_j‖_{ℓ^r}` over the dyadic range.
pub fn besov_norm(u: &SpectralField, idx: BesovIndex) -> f64 {
    combine(&shell_norms(u, idx.p), idx.s, idx.r)
}

/// `‖(2^{js}‖Ṡ_j u‖_{L^p})_j‖_{ℓ^r}` for `s < 0`, together with its ratio to
/// the block-based norm.
#[derive(Clone, Debug, Serialize)]
pub struct LowFrequencyReport {
    pub value: f64,
    pub besov: f64,
    pub ratio: f64,
}

pub fn low_freq_characterization(u: &SpectralField, idx: BesovIndex) -> Result<LowFrequencyReport> {
    if idx.s >= 0.0 {
        return Err(Error::InvalidIndex(format!("low-frequency characterization needs s < 0, got {}", idx.s)));
    }
    let part = u.space().partition();
    let terms = (part.j_min..=part.j_max + 1).map(|j| {
        let v = low_cutoff_unchecked(u, j);
        (j as f64 * idx.s).exp2() * lp_norm(&v.without_mean(), idx.p)
    });
    let value = lr_sum(terms.collect::<Vec<_>>(), idx.r);
    let besov = besov_norm(u, idx);
    let ratio = if besov > 0.0 { value / besov } else { 0.0 };
    Ok(LowFrequencyReport { value, besov, ratio })
}

pub(crate) fn low_cutoff_unchecked(u: &SpectralField, j: i32) -> SpectralField {
    let scale = (-j as f64).exp2();
    let mask: Vec<f64> = u.space().xi_abs().iter().map(|&r| crate::spectral::chi(scale * r)).collect();
    u.masked(&mask)
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`, nonnegative when the inequality holds.
    pub slack: f64,
    pub holds: bool,
}

/// Checks `‖u‖_{Ḃ^{θs1+(1−θ)s2}} ≤ ‖u‖_{Ḃ^{s1}}^θ ‖u‖_{Ḃ^{s2}}^{1−θ}`.
pub fn interpolation_check(u: &SpectralField, s1: f64, s2: f64, theta: f64, p: f64, r: f64) -> Result<InterpolationReport> {
    if !(s1 < s2) || !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidIndex(format!("interpolation needs s1 < s2 and θ ∈ (0,1): {s1}, {s2}, {theta}")));
    }
    BesovIndex::new(s1, p, r)?;
    let shells = shell_norms(u, p);
    let lhs = combine(&shells, theta * s1 + (1.0 - theta) * s2, r);
    let rhs = combine(&shells, s1, r).powf(theta) * combine(&shells, s2, r).powf(1.0 - theta);
    Ok(InterpolationReport { lhs, rhs, slack: rhs - lhs, holds: lhs <= rhs * (1.0 + 1e-10) })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub pair: f64,
    /// `|pair| / (‖u‖_{Ḃ^s_{p,r}} ‖v‖_{Ḃ^{−s}_{p′,r′}})`.
    pub ratio: f64,
}

/// `Σ_j ⟨Δ̇_j u, Δ̃_j v⟩` with `Δ̃_j = Δ̇_{j−1} + Δ̇_j + Δ̇_{j+1}`.
pub fn duality_pair(u: &SpectralField, v: &SpectralField, idx: BesovIndex) -> Result<DualityReport> {
    u.same_space(v)?;
    let part = u.space().partition();
    let mut pair = 0.0;
    for j in part.shells() {
        let uj = block(u, j);
        let vj = block(v, j - 1).add(&block(v, j)).add(&block(v, j + 1));
        pair += uj.without_mean().inner(&vj.without_mean());
    }
    let denom = besov_norm(u, idx) * besov_norm(v, idx.dual());
    let ratio = if denom > 0.0 { pair.abs() / denom } else { 0.0 };
    Ok(DualityReport { pair, ratio })
}

/// Ratio `‖u‖_{Ḃ^{s−n(1/p1−1/p2)}_{p2,r}} / ‖u‖_{Ḃ^s_{p1,r}}` for `p1 ≤ p2`.
pub fn embedding_ratio(u: &SpectralField, s: f64, p1: f64, p2: f64, r: f64) -> Result<f64> {
    if p1 > p2 {
        return Err(Error::InvalidIndex(format!("embedding needs p1 ≤ p2, got {p1} > {p2}")));
    }
    let n = u.dim() as f64;
    let lo = besov_norm(u, BesovIndex::new(s, p1, r)?);
    let hi = besov_norm(u, BesovIndex::new(s - n * (1.0 / p1 - 1.0 / p2), p2, r)?);
    Ok(if lo > 0.0 { hi / lo } else { 0.0 })
}

/// `x ↦ u(2x)` realized exactly on the torus of side `L/2`.
pub fn dilate(u: &SpectralField) -> Result<SpectralField> {
    u.reinterpret(&u.space().dilated()?)
}

/// Time samples of a norm and the exponent used to aggregate them in time.
#[derive(Clone, Debug, Serialize)]
pub struct NormTrace {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub index: BesovIndex,
    pub time_exponent: f64,
}

impl NormTrace {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>, index: BesovIndex, time_exponent: f64) -> Self {
        Self { name: name.into(), times, values, index, time_exponent }
    }

    /// `L^q` over `[0, t_i]` for every stored `t_i`: running maximum when
    /// `q = ∞`, left-endpoint quadrature otherwise.
    pub fn running(&self) -> Vec<f64> {
        running_lq(&self.times, &self.values, self.time_exponent)
    }

    /// `L^q_T` over the full horizon.
    pub fn total(&self) -> f64 {
        *self.running().last().unwrap_or(&0.0)
    }
}

pub fn running_lq(times: &[f64], values: &[f64], q: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    if q.is_infinite() {
        let mut m: f64 = 0.0;
        for &v in values {
            m = m.max(v);
            out.push(m);
        }
        return out;
    }
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..values.len() {
        acc += (times[i] - times[i - 1]) * values[i - 1].powf(q);
        out.push(acc.powf(1.0 / q));
    }
    out
}

/// Writes traces sharing a time grid as CSV `t,<names>`, 17 significant
/// digits.
pub fn write_traces_csv<W: Write>(w: &mut W, traces: &[NormTrace]) -> Result<()> {
    let times = match traces.first() {
        Some(t) => &t.times,
        None => return Ok(()),
    };
    let mut header = String::from("t");
    for t in traces {
        header.push(',');
        header.push_str(&t.name);
    }
    writeln!(w, "{header}")?;
    for (i, t) in times.iter().enumerate() {
        let mut row = format!("{t:.16e}");
        for tr in traces {
            row.push_str(&format!(",{:.16e}", tr.values.get(i).copied().unwrap_or(f64::NAN)));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}
