//! Lagrangian flows `X(t, y) = y + ∫₀ᵗ v̄(τ, y)dτ`, their Jacobian inverses
//! `A = (DX)^{-1}`, composition with the flow and its inverse, and the
//! stability estimates for `A`.

use serde::Serialize;
use serde_json::json;

use crate::besov::{besov_norm, lr_sum, BesovIndex};
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::spectral::{Phys, Space, SpectralField, Trajectory};

/// Pointwise `n × n` matrix product; matrices are stored row-major as
/// `n²` components.
pub fn mat_mul(a: &Phys, b: &Phys, n: usize) -> Phys {
    let mut out = Phys::zeros(a.space(), n * n);
    let p = a.points();
    let (x, y) = (a.values(), b.values());
    let o = out.values_mut();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let (ik, kj, ij) = ((i * n + k) * p, (k * n + j) * p, (i * n + j) * p);
                for s in 0..p {
                    o[ij + s] += x[ik + s] * y[kj + s];
                }
            }
        }
    }
    out
}

/// Pointwise `M v` for a matrix field and a vector field.
pub fn mat_vec(m: &Phys, v: &Phys, n: usize) -> Phys {
    let mut out = Phys::zeros(m.space(), n);
    let p = m.points();
    let (x, y) = (m.values(), v.values());
    let o = out.values_mut();
    for i in 0..n {
        for k in 0..n {
            for s in 0..p {
                o[i * p + s] += x[(i * n + k) * p + s] * y[k * p + s];
            }
        }
    }
    out
}

pub fn transpose(m: &Phys, n: usize) -> Phys {
    let p = m.points();
    let mut out = Phys::zeros(m.space(), n * n);
    for i in 0..n {
        for j in 0..n {
            let src = m.comp(i * n + j).to_vec();
            out.values_mut()[(j * n + i) * p..(j * n + i + 1) * p].copy_from_slice(&src);
        }
    }
    out
}

pub fn identity(space: &Space, n: usize) -> Phys {
    let mut out = Phys::zeros(space, n * n);
    for i in 0..n {
        out.comp_mut(i * n + i).iter_mut().for_each(|v| *v = 1.0);
    }
    out
}

fn det_point(m: &[f64], n: usize) -> f64 {
    if n == 2 {
        m[0] * m[3] - m[1] * m[2]
    } else {
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
    }
}

fn inv_point(m: &[f64], n: usize) -> Vec<f64> {
    let d = det_point(m, n);
    if n == 2 {
        vec![m[3] / d, -m[1] / d, -m[2] / d, m[0] / d]
    } else {
        let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0 * 3 + c0] * m[r1 * 3 + c1] - m[r0 * 3 + c1] * m[r1 * 3 + c0];
        vec![
            c(1, 1, 2, 2) / d,
            -c(0, 1, 2, 2) / d,
            c(0, 1, 1, 2) / d,
            -c(1, 0, 2, 2) / d,
            c(0, 0, 2, 2) / d,
            -c(0, 0, 1, 2) / d,
            c(1, 0, 2, 1) / d,
            -c(0, 0, 2, 1) / d,
            c(0, 0, 1, 1) / d,
        ]
    }
}

/// Pointwise inverse and determinant of a matrix field.
pub fn invert(m: &Phys, n: usize) -> (Phys, Phys) {
    let p = m.points();
    let mut inv = Phys::zeros(m.space(), n * n);
    let mut det = Phys::zeros(m.space(), 1);
    let mut buf = vec![0.0; n * n];
    for s in 0..p {
        for c in 0..n * n {
            buf[c] = m.values()[c * p + s];
        }
        det.values_mut()[s] = det_point(&buf, n);
        let r = inv_point(&buf, n);
        for c in 0..n * n {
            inv.values_mut()[c * p + s] = r[c];
        }
    }
    (inv, det)
}

/// Flow at one time: displacement `X − y`, `DX`, `A = (DX)^{-1}` and
/// `det DX` on the grid.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub disp: SpectralField,
    pub jacobian: Phys,
    pub a: Phys,
    pub det: Phys,
}

impl FlowState {
    pub fn identity(space: &Space, t: f64) -> Self {
        let n = space.dim();
        let mut det = Phys::zeros(space, 1);
        det.values_mut().iter_mut().for_each(|v| *v = 1.0);
        Self { t, disp: SpectralField::zeros(space, n), jacobian: identity(space, n), a: identity(space, n), det }
    }

    /// Flow of a constant-in-time displacement field.
    pub fn from_displacement(disp: SpectralField, t: f64) -> Result<Self> {
        let n = disp.dim();
        let jacobian = disp.gradient().to_phys().add(&identity(disp.space(), n));
        let defect = neumann_defect(&jacobian, n);
        if defect >= 1.0 {
            return Err(Error::FlowNotInvertible { deviation: defect });
        }
        let (a, det) = invert(&jacobian, n);
        Ok(Self { t, disp, jacobian, a, det })
    }

    pub fn dim(&self) -> usize {
        self.disp.dim()
    }

    pub fn space(&self) -> &Space {
        self.disp.space()
    }

    /// Grid max of `|det DX − 1|`.
    pub fn det_defect(&self) -> f64 {
        self.det.values().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Grid max of the entries of `A·DX − Id` and `DX·A − Id`.
    pub fn inversion_defect(&self) -> f64 {
        let n = self.dim();
        let id = identity(self.space(), n);
        let l = mat_mul(&self.a, &self.jacobian, n).sub(&id);
        let r = mat_mul(&self.jacobian, &self.a, n).sub(&id);
        l.values().iter().chain(r.values()).map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `A` truncated to the band.
    pub fn a_spectral(&self) -> SpectralField {
        self.a.to_spectral()
    }
}

/// Grid max of the Frobenius norm of `DX − Id`.
fn neumann_defect(jacobian: &Phys, n: usize) -> f64 {
    let id = identity(jacobian.space(), n);
    jacobian.sub(&id).magnitude().into_iter().fold(0.0, f64::max)
}

/// Flow of `v` at sample `index`, by trapezoidal quadrature in time.
pub fn flow_from_velocity(v: &Trajectory, index: usize) -> Result<FlowState> {
    let sp = v.fields[0].space().clone();
    let n = sp.dim();
    let mut disp = SpectralField::zeros(&sp, n);
    for i in 0..index {
        disp = disp.add(&v.fields[i].add(&v.fields[i + 1]).scale(0.5 * v.dt));
    }
    let mut flow = FlowState::from_displacement(disp, index as f64 * v.dt)?;
    flow.t = index as f64 * v.dt;
    Ok(flow)
}

/// Flows at every sample of `v`.
pub fn flow_trajectory(v: &Trajectory) -> Result<Vec<FlowState>> {
    let sp = v.fields[0].space().clone();
    let n = sp.dim();
    let mut out = vec![FlowState::identity(&sp, 0.0)];
    let mut disp = SpectralField::zeros(&sp, n);
    for i in 0..v.steps() {
        disp = disp.add(&v.fields[i].add(&v.fields[i + 1]).scale(0.5 * v.dt));
        out.push(FlowState::from_displacement(disp.clone(), (i + 1) as f64 * v.dt)?);
    }
    Ok(out)
}

/// `∂t A = −A (Dv̄) A` on the grid.
pub fn time_derivative_of_inverse(flow: &FlowState, v: &SpectralField) -> Phys {
    let n = flow.dim();
    let dv = v.gradient().to_phys();
    mat_mul(&mat_mul(&flow.a, &dv, n), &flow.a, n).scale(-1.0)
}

/// `‖∇v‖_{L²_T(Ḃ^{n/p−1}_{p,1})} + ‖∇v‖_{L¹_T(Ḃ^{n/p}_{p,1})}`, trapezoidal
/// in time.
pub fn smallness(v: &Trajectory, p: f64) -> f64 {
    let n = v.fields[0].dim() as f64;
    let lo = BesovIndex { s: n / p - 1.0, p, r: 1.0 };
    let hi = BesovIndex { s: n / p, p, r: 1.0 };
    let g: Vec<SpectralField> = v.fields.iter().map(|u| u.gradient()).collect();
    let l2: Vec<f64> = g.iter().map(|x| besov_norm(x, lo).powi(2)).collect();
    let l1: Vec<f64> = g.iter().map(|x| besov_norm(x, hi)).collect();
    trapezoid(&l2, v.dt).sqrt() + trapezoid(&l1, v.dt)
}

pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dt * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Evaluates `a(y + d(y))` at every grid point `y`: nearest-node shift
/// followed by a Taylor expansion in the remaining offset, truncated once the
/// term bound falls below `1e-17` relative.
pub fn compose(a: &SpectralField, disp: &Phys) -> Phys {
    let sp = a.space().clone();
    let grid = *sp.grid();
    let n = grid.dim;
    let npts = grid.points();
    let h = grid.spacing();
    let size = grid.size as i64;
    let dv = disp.values();
    let mut target = vec![0usize; npts];
    let mut offset = vec![0.0; n * npts];
    let mut rmax: f64 = 0.0;
    for s in 0..npts {
        let mut rest = s;
        let mut idx = [0i64; 3];
        for d in (0..n).rev() {
            idx[d] = (rest % grid.size) as i64;
            rest /= grid.size;
        }
        let mut t = 0usize;
        let mut r2 = 0.0;
        for d in 0..n {
            let q = dv[d * npts + s] / h;
            let shift = q.round();
            let r = (q - shift) * h;
            offset[d * npts + s] = r;
            r2 += r * r;
            t = t * grid.size + (idx[d] + shift as i64).rem_euclid(size) as usize;
        }
        target[s] = t;
        rmax = rmax.max(r2.sqrt());
    }
    let xmax = sp.xi_abs().iter().cloned().fold(0.0, f64::max);
    let x = rmax * xmax;
    let mut order = 0usize;
    let mut bound = 1.0;
    while bound > 1e-17 && order < 60 {
        order += 1;
        bound *= x / order as f64;
    }
    let comps = a.comps();
    let mut out = Phys::zeros(&sp, comps);
    let mut level: Vec<([usize; 3], SpectralField)> = vec![([0; 3], a.clone())];
    for k in 0..=order {
        let stacked = SpectralField::stack(&level.iter().map(|(_, f)| f.clone()).collect::<Vec<_>>()).unwrap();
        let phys = stacked.to_phys();
        let vals = phys.values();
        for (li, (alpha, _)) in level.iter().enumerate() {
            let mut fact = 1.0;
            for d in 0..n {
                for i in 1..=alpha[d] {
                    fact *= i as f64;
                }
            }
            for s in 0..npts {
                let mut w = 1.0 / fact;
                for d in 0..n {
                    w *= offset[d * npts + s].powi(alpha[d] as i32);
                }
                if w == 0.0 {
                    continue;
                }
                let t = target[s];
                for c in 0..comps {
                    out.values_mut()[c * npts + s] += w * vals[(li * comps + c) * npts + t];
                }
            }
        }
        if k == order || x == 0.0 {
            break;
        }
        let mut next = Vec::new();
        for (alpha, f) in &level {
            let last = (0..n).rev().find(|&d| alpha[d] > 0).unwrap_or(0);
            for d in last..n {
                let mut beta = *alpha;
                beta[d] += 1;
                next.push((beta, f.partial(d)));
            }
        }
        level = next;
    }
    out
}

/// `a ∘ X` truncated to the band.
pub fn compose_with_flow(a: &SpectralField, flow: &FlowState) -> SpectralField {
    compose(a, &flow.disp.to_phys()).to_spectral()
}

/// `X^{-1}(x) = x + e(x)` on the grid.
#[derive(Clone, Debug)]
pub struct InverseFlow {
    pub disp: Phys,
    pub iterations: usize,
    pub defect: f64,
}

/// Solves `y = x − d(y)` for every node `x` by the fixed point
/// `δ ← d(x − δ)`, to `1e-10` grid max.
pub fn inverse_flow(flow: &FlowState) -> Result<InverseFlow> {
    let d = &flow.disp;
    let mut delta = d.to_phys();
    let mut last = f64::INFINITY;
    for k in 1..=200 {
        let next = compose(d, &delta.scale(-1.0));
        let change = next.sub(&delta).values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        delta = next;
        if change <= 1e-12 {
            return Ok(InverseFlow { disp: delta.scale(-1.0), iterations: k, defect: change });
        }
        if k > 5 && change > 0.99 * last {
            return Err(Error::InverseStagnation { defect: change });
        }
        last = change;
    }
    Err(Error::InverseStagnation { defect: last })
}

/// `u ∘ X^{-1}` truncated to the band.
pub fn compose_inverse(u: &SpectralField, inv: &InverseFlow) -> SpectralField {
    compose(u, &inv.disp).to_spectral()
}

/// Grid max of `|X^{-1}(X(y)) − y|`.
pub fn round_trip_defect(flow: &FlowState, inv: &InverseFlow) -> f64 {
    let e = inv.disp.to_spectral();
    let back = compose(&e, &flow.disp.to_phys());
    back.add(&flow.disp.to_phys()).values().iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Defects of `(∇K)∘X = div(A K∘X)` and `(div H)∘X = div(A H∘X)`.
#[derive(Clone, Debug, Serialize)]
pub struct FormulaReport {
    pub gradient_defect: f64,
    pub divergence_defect: f64,
    pub det_defect: f64,
}

/// Column-wise divergence of `A·w` for a matrix field `A` given on the grid
/// and `w` scalar (`div(A w)_j = Σ_i ∂_i(A_{ij} w)`) or vector
/// (`div(A w) = Σ_i ∂_i (A w)_i`).
fn div_a(a: &Phys, w: &Phys, n: usize) -> SpectralField {
    if w.comps() == 1 {
        a.mul(w).to_spectral().divergence()
    } else {
        mat_vec(a, w, n).to_spectral().divergence()
    }
}

pub fn transported_operators(h: &SpectralField, k: &SpectralField, flow: &FlowState) -> Result<FormulaReport> {
    let n = flow.dim();
    if h.comps() != n || k.comps() != 1 {
        return Err(Error::Components { expected: n, found: h.comps() });
    }
    let d = flow.disp.to_phys();
    let rel = |lhs: &Phys, rhs: &Phys| {
        let scale = lhs.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let diff = lhs.sub(rhs).values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    };
    let lhs_g = compose(&k.gradient(), &d);
    let rhs_g = div_a(&flow.a, &compose(k, &d), n).to_phys();
    let lhs_d = compose(&h.divergence(), &d);
    let rhs_d = div_a(&flow.a, &compose(h, &d), n).to_phys();
    Ok(FormulaReport { gradient_defect: rel(&lhs_g, &rhs_g), divergence_defect: rel(&lhs_d, &rhs_d), det_defect: flow.det_defect() })
}

/// `‖a∘X‖_{Ḃ^s_{p,1}} / ‖a‖_{Ḃ^s_{p,1}}`.
pub fn composition_constant(a: &SpectralField, flow: &FlowState, s: f64, p: f64) -> f64 {
    let idx = BesovIndex { s, p, r: 1.0 };
    let den = besov_norm(a, idx);
    if den == 0.0 {
        return 0.0;
    }
    besov_norm(&compose_with_flow(a, flow).without_mean(), idx) / den
}

/// Measured constants of the six stability estimates for the flows of two
/// velocities on a shared time grid.
pub fn stability_bounds_check(v1: &Trajectory, v2: &Trajectory, p: f64) -> Result<Vec<EstimateReport>> {
    let sp = v1.fields[0].space().clone();
    let n = sp.dim();
    let nf = n as f64;
    let dt = v1.dt;
    let hi = BesovIndex { s: nf / p, p, r: 1.0 };
    let lo = BesovIndex { s: nf / p - 1.0, p, r: 1.0 };
    let f1 = flow_trajectory(v1)?;
    let f2 = flow_trajectory(v2)?;
    let dta = |flows: &[FlowState], v: &Trajectory| -> Vec<SpectralField> {
        flows.iter().zip(&v.fields).map(|(f, u)| time_derivative_of_inverse(f, u).to_spectral()).collect()
    };
    let d1 = dta(&f1, v1);
    let d2 = dta(&f2, v2);
    let id = identity(&sp, n);
    let g1: Vec<SpectralField> = v1.fields.iter().map(|u| u.gradient()).collect();
    let gd: Vec<SpectralField> = v1.fields.iter().zip(&v2.fields).map(|(a, b)| b.sub(a).gradient()).collect();
    let norms = |xs: &[SpectralField], idx: BesovIndex| -> Vec<f64> { xs.iter().map(|x| besov_norm(x, idx)).collect() };
    let ratio = |l: f64, r: f64| if r > 0.0 { l / r } else if l == 0.0 { 0.0 } else { f64::INFINITY };
    let running = |vals: &[f64]| -> Vec<f64> { (0..vals.len()).map(|i| trapezoid(&vals[..=i], dt)).collect() };

    let a1_l: Vec<f64> = f1.iter().map(|f| besov_norm(&id.sub(&f.a).to_spectral(), hi)).collect();
    let a1_r = running(&norms(&g1, hi));
    let pick = |l: &[f64], r: &[f64]| -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, 0.0);
        for i in 0..l.len() {
            let c = ratio(l[i], r[i]);
            if c > best.2 {
                best = (l[i], r[i], c);
            }
        }
        best
    };
    let a1 = pick(&a1_l, &a1_r);
    let a2 = pick(&norms(&d1, lo), &norms(&g1, lo));
    let a3 = pick(&norms(&d1, hi), &norms(&g1, hi));
    let diff_a: Vec<SpectralField> = f1.iter().zip(&f2).map(|(x, y)| x.a.sub(&y.a).to_spectral()).collect();
    let diff_da: Vec<SpectralField> = d1.iter().zip(&d2).map(|(x, y)| x.sub(y)).collect();
    let gd_hi = trapezoid(&norms(&gd, hi), dt);
    let a4_l = lr_sum(norms(&diff_a, hi), f64::INFINITY);
    let a5_l = trapezoid(&norms(&diff_da, hi), dt);
    let sq = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x * x).collect() };
    let a6_l = trapezoid(&sq(norms(&diff_da, lo)), dt).sqrt();
    let a6_r = trapezoid(&sq(norms(&gd, lo)), dt).sqrt();
    let rows = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", (a4_l, gd_hi, ratio(a4_l, gd_hi))),
        ("A5", (a5_l, gd_hi, ratio(a5_l, gd_hi))),
        ("A6", (a6_l, a6_r, ratio(a6_l, a6_r))),
    ];
    Ok(rows
        .iter()
        .map(|(id, (l, r, c))| EstimateReport::new(format!("lagrange_{id}"), json!({"lhs": l, "rhs": r, "p": p, "dt": dt}), *c, *sp.grid()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{random_field, Basis, FieldSpectrum, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(dim: usize, n: usize) -> Space {
        Basis::new(Grid::periodic(dim, n).unwrap()).unwrap()
    }

    #[test]
    fn inverse_of_random_matrices() {
        for n in [2, 3] {
            let sp = space(n, 8);
            let m = random_field(&sp, n * n, FieldSpectrum::full(1.0), &mut ChaCha8Rng::seed_from_u64(1)).scale(0.1).to_phys().add(&identity(&sp, n));
            let (inv, _) = invert(&m, n);
            let e = mat_mul(&inv, &m, n).sub(&identity(&sp, n));
            assert!(e.values().iter().all(|v| v.abs() < 1e-12), "{}", e.values().iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
    }

    #[test]
    fn constant_velocity_flow() {
        let sp = space(2, 16);
        let c = SpectralField::constant(&sp, 0.3);
        let v = SpectralField::stack(&[c.clone(), c.scale(-2.0)]).unwrap();
        let flow = flow_from_velocity(&Trajectory::constant(&v, 4, 0.25), 4).unwrap();
        assert!(flow.det_defect() < 1e-15);
        assert!(flow.disp.mean()[0] - 0.3 < 1e-15);
        assert!(flow.inversion_defect() < 1e-15);
    }

    #[test]
    fn composition_with_shift_is_exact() {
        let sp = space(2, 32);
        let a = SpectralField::mode(&sp, [3, 2, 0], 1.0, false).unwrap();
        let mut d = Phys::zeros(&sp, 2);
        d.comp_mut(0).iter_mut().for_each(|v| *v = 0.37);
        d.comp_mut(1).iter_mut().for_each(|v| *v = -1.21);
        let got = compose(&a, &d);
        let exact = Phys::from_fn(&sp, |x| (3.0 * (x[0] + 0.37) + 2.0 * (x[1] - 1.21)).cos());
        assert!(got.sub(&exact).values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn large_displacement_rejected() {
        let sp = space(2, 16);
        let d = SpectralField::stack(&[SpectralField::mode(&sp, [1, 0, 0], 2.0, true).unwrap(), SpectralField::zeros(&sp, 1)]).unwrap();
        assert!(matches!(FlowState::from_displacement(d, 1.0), Err(Error::FlowNotInvertible { .. })));
    }
}
