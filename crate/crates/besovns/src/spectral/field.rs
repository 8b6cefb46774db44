use std::sync::Arc;


use crate::error::{Error, Result};

use super::{Space, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Real field on a periodic grid stored by its band-limited Fourier
/// coefficients, normalized as `û_k = N^{-n} Σ_x u(x) e^{-ik·x}`.
///
/// Components are stored one after another: scalars have 1, vectors `n`,
/// matrices `n²` in row-major order `(i, j) ↦ i·n + j`.
#[derive(Clone)]
pub struct SpectralField {
    space: Space,
    comps: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", self.space.grid())
            .field("comps", &self.comps)
            .field("l2", &self.l2_norm())
            .finish()
    }
}

/// Physical samples, component-major, each component row-major on the grid.
#[derive(Clone, Debug)]
pub struct Phys {
    space: Space,
    comps: usize,
    data: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(space: &Space, comps: usize) -> Self {
        Self { space: space.clone(), comps, data: vec![ZERO; comps * space.len()] }
    }

    pub fn from_coefficients(space: &Space, comps: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != comps * space.len() {
            return Err(Error::Components { expected: comps * space.len(), found: data.len() });
        }
        Ok(Self { space: space.clone(), comps, data })
    }

    /// Scalar field with a single real Fourier pair `amp·cos(k·x)` (or
    /// `amp·sin(k·x)` when `sine`).
    pub fn mode(space: &Space, k: [i64; 3], amp: f64, sine: bool) -> Result<Self> {
        let s = space
            .slot_of(k)
            .ok_or_else(|| Error::InvalidInput(format!("wavevector {k:?} outside the band")))?;
        let mut u = Self::zeros(space, 1);
        let c = if sine { C64::new(0.0, -0.5 * amp) } else { C64::new(0.5 * amp, 0.0) };
        let ns = space.conjugate_slot()[s];
        u.data[s] += c;
        u.data[ns] += c.conj();
        Ok(u)
    }

    /// Constant scalar field.
    pub fn constant(space: &Space, value: f64) -> Self {
        let mut u = Self::zeros(space, 1);
        u.data[0] = C64::new(value, 0.0);
        u
    }

    /// Stacks scalar fields into one multi-component field.
    pub fn stack(parts: &[SpectralField]) -> Result<Self> {
        let space = parts.first().ok_or_else(|| Error::InvalidInput("empty stack".into()))?.space.clone();
        let mut data = Vec::with_capacity(parts.len() * space.len());
        for p in parts {
            if !Arc::ptr_eq(&p.space, &space) {
                return Err(Error::GridMismatch);
            }
            data.extend_from_slice(&p.data);
        }
        let comps = parts.iter().map(|p| p.comps).sum();
        Ok(Self { space, comps, data })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.data
    }

    pub fn coefficients_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn comp(&self, c: usize) -> &[C64] {
        let m = self.space.len();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [C64] {
        let m = self.space.len();
        &mut self.data[c * m..(c + 1) * m]
    }

    pub fn component(&self, c: usize) -> SpectralField {
        Self { space: self.space.clone(), comps: 1, data: self.comp(c).to_vec() }
    }

    pub fn same_space(&self, other: &SpectralField) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space.grid() == other.space.grid() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn same_shape(&self, other: &SpectralField) -> Result<()> {
        self.same_space(other)?;
        if self.comps != other.comps {
            return Err(Error::Components { expected: self.comps, found: other.comps });
        }
        Ok(())
    }

    /// Spatial mean of each component (the `k = 0` coefficients).
    pub fn mean(&self) -> Vec<f64> {
        (0..self.comps).map(|c| self.comp(c)[0].re).collect()
    }

    /// True when every `k = 0` coefficient vanishes.
    pub fn mean_excluded(&self) -> bool {
        (0..self.comps).all(|c| self.comp(c)[0] == ZERO)
    }

    pub fn without_mean(mut self) -> Self {
        for c in 0..self.comps {
            self.comp_mut(c)[0] = ZERO;
        }
        self
    }

    pub fn require_mean_zero(&self) -> Result<()> {
        let scale = self.max_abs_coefficient().max(1.0);
        if (0..self.comps).all(|c| self.comp(c)[0].norm() <= 1e-14 * scale) {
            Ok(())
        } else {
            Err(Error::UndefinedZeroMode)
        }
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|û_k − conj(û_{−k})|`, zero for an exactly real field.
    pub fn hermitian_defect(&self) -> f64 {
        let neg = self.space.conjugate_slot();
        let mut d: f64 = 0.0;
        for c in 0..self.comps {
            let u = self.comp(c);
            for s in 0..u.len() {
                d = d.max((u[s] - u[neg[s]].conj()).norm());
            }
        }
        d
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|z| z * a)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { space: self.space.clone(), comps: self.comps, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        self.lincomb(1.0, other, -1.0)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &SpectralField, b: f64) -> Self {
        self.same_shape(other).expect("field shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x * a + y * b).collect();
        Self { space: self.space.clone(), comps: self.comps, data }
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        self.same_shape(other).expect("field shape mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y * a;
        }
    }

    /// Multiplies every coefficient by a real per-slot mask.
    pub fn masked(&self, mask: &[f64]) -> Self {
        let m = self.space.len();
        let data = self.data.iter().enumerate().map(|(i, z)| z * mask[i % m]).collect();
        Self { space: self.space.clone(), comps: self.comps, data }
    }

    /// Fourier multiplier `û(ξ) ↦ A(ξ)û(ξ)` applied componentwise.
    pub fn multiplier(&self, symbol: impl Fn(&[f64; 3]) -> C64) -> Self {
        let m = self.space.len();
        let sym: Vec<C64> = self.space.xi().iter().map(&symbol).collect();
        let data = self.data.iter().enumerate().map(|(i, z)| z * sym[i % m]).collect();
        Self { space: self.space.clone(), comps: self.comps, data }
    }

    /// `∂_d` of every component.
    pub fn partial(&self, d: usize) -> Self {
        self.multiplier(|xi| I * xi[d])
    }

    /// Gradient of a scalar field (vector), or of each component (matrix
    /// with rows indexed by component: `M_{ij} = ∂_j u_i`).
    pub fn gradient(&self) -> Self {
        let n = self.dim();
        let m = self.space.len();
        let xi = self.space.xi();
        let mut out = Self::zeros(&self.space, self.comps * n);
        for c in 0..self.comps {
            let u = self.comp(c);
            for d in 0..n {
                let dst = &mut out.data[(c * n + d) * m..(c * n + d + 1) * m];
                for s in 0..m {
                    dst[s] = u[s] * I * xi[s][d];
                }
            }
        }
        out
    }

    /// Divergence of a vector field; for a matrix field, the column-wise
    /// divergence `(div M)_j = Σ_i ∂_i M_{ij}`.
    pub fn divergence(&self) -> Self {
        let n = self.dim();
        let m = self.space.len();
        let xi = self.space.xi();
        if self.comps == n {
            let mut out = Self::zeros(&self.space, 1);
            for d in 0..n {
                let u = self.comp(d);
                for s in 0..m {
                    out.data[s] += u[s] * I * xi[s][d];
                }
            }
            out
        } else {
            assert_eq!(self.comps, n * n, "divergence needs a vector or matrix field");
            let mut out = Self::zeros(&self.space, n);
            for i in 0..n {
                for j in 0..n {
                    let u = self.comp(i * n + j);
                    let dst = &mut out.data[j * m..(j + 1) * m];
                    for s in 0..m {
                        dst[s] += u[s] * I * xi[s][i];
                    }
                }
            }
            out
        }
    }

    /// Row-wise divergence of a matrix field `(div M)_i = Σ_j ∂_j M_{ij}`.
    pub fn row_divergence(&self) -> Self {
        self.transpose().divergence()
    }

    /// Transpose of a matrix field.
    pub fn transpose(&self) -> Self {
        let n = self.dim();
        assert_eq!(self.comps, n * n);
        let m = self.space.len();
        let mut out = Self::zeros(&self.space, n * n);
        for i in 0..n {
            for j in 0..n {
                out.data[(j * n + i) * m..(j * n + i + 1) * m].copy_from_slice(self.comp(i * n + j));
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        self.multiplier(|xi| C64::new(-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]), 0.0))
    }

    /// `Δ^{-1}`; the `k = 0` coefficient must vanish.
    pub fn inverse_laplacian(&self) -> Result<Self> {
        self.require_mean_zero()?;
        Ok(self.multiplier(|xi| {
            let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            if r2 == 0.0 {
                ZERO
            } else {
                C64::new(-1.0 / r2, 0.0)
            }
        }))
    }

    /// Leray split `(Pu, Qu)` with `Qu = ∇Δ^{-1}div u`.
    pub fn leray_split(&self) -> Result<(Self, Self)> {
        let n = self.dim();
        if self.comps != n {
            return Err(Error::Components { expected: n, found: self.comps });
        }
        self.require_mean_zero()?;
        let m = self.space.len();
        let xi = self.space.xi();
        let r2 = self.space.xi_abs();
        let mut q = Self::zeros(&self.space, n);
        for s in 1..m {
            let mut dot = ZERO;
            for d in 0..n {
                dot += self.data[d * m + s] * xi[s][d];
            }
            let w = dot / (r2[s] * r2[s]);
            for d in 0..n {
                q.data[d * m + s] = w * xi[s][d];
            }
        }
        let mut p = self.sub(&q);
        for d in 0..n {
            p.data[d * m] = ZERO;
        }
        Ok((p, q))
    }

    pub fn leray(&self) -> Result<Self> {
        Ok(self.leray_split()?.0)
    }

    pub fn gradient_part(&self) -> Result<Self> {
        Ok(self.leray_split()?.1)
    }

    /// `∫ u·v` over the box, by Parseval.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.same_shape(other).expect("field shape mismatch");
        let s: f64 = self.data.iter().zip(&other.data).map(|(x, y)| (x * y.conj()).re).sum();
        s * self.space.grid().volume()
    }

    /// `‖u‖_{L²}` by Parseval (pointwise Euclidean norm for several components).
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.space.grid().volume()).sqrt()
    }

    pub fn to_phys(&self) -> Phys {
        let grid = *self.space.grid();
        let npts = grid.points();
        let m = self.space.len();
        let full = self.space.full_index();
        let engine = self.space.engine();
        let mut data = vec![0.0; self.comps * npts];
        let mut buf = vec![ZERO; npts];
        let mut c = 0;
        while c < self.comps {
            buf.iter_mut().for_each(|z| *z = ZERO);
            let pair = c + 1 < self.comps;
            for s in 0..m {
                let mut z = self.data[c * m + s];
                if pair {
                    z += I * self.data[(c + 1) * m + s];
                }
                buf[full[s]] = z;
            }
            engine.inverse(&mut buf);
            for (x, z) in data[c * npts..(c + 1) * npts].iter_mut().zip(&buf) {
                *x = z.re;
            }
            if pair {
                for (x, z) in data[(c + 1) * npts..(c + 2) * npts].iter_mut().zip(&buf) {
                    *x = z.im;
                }
            }
            c += 2;
        }
        Phys { space: self.space.clone(), comps: self.comps, data }
    }

    /// Re-expresses the field on another basis with the same dimension; modes
    /// outside the target band are dropped.
    pub fn transfer(&self, target: &Space) -> Result<Self> {
        if target.dim() != self.dim() {
            return Err(Error::GridMismatch);
        }
        let mut out = Self::zeros(target, self.comps);
        let m = self.space.len();
        let mt = target.len();
        let lookup: std::collections::HashMap<[i64; 3], usize> =
            target.modes().iter().enumerate().map(|(s, k)| (*k, s)).collect();
        for (s, k) in self.space.modes().iter().enumerate() {
            if let Some(&t) = lookup.get(k) {
                for c in 0..self.comps {
                    out.data[c * mt + t] = self.data[c * m + s];
                }
            }
        }
        Ok(out)
    }

    /// Same coefficients read on the basis `space` (which must share the band
    /// layout, e.g. a dilated copy).
    pub fn reinterpret(&self, space: &Space) -> Result<Self> {
        if space.modes() != self.space.modes() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { space: space.clone(), comps: self.comps, data: self.data.clone() })
    }

    /// Pointwise product of two fields with dealiasing. Either operand may be
    /// scalar; otherwise the component counts must agree.
    pub fn product(&self, other: &SpectralField) -> Self {
        self.to_phys().mul(&other.to_phys()).to_spectral()
    }

    /// Largest coefficient-wise difference.
    pub fn max_diff(&self, other: &SpectralField) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }
}

impl Phys {
    pub fn zeros(space: &Space, comps: usize) -> Self {
        Self { space: space.clone(), comps, data: vec![0.0; comps * space.grid().points()] }
    }

    pub fn from_values(space: &Space, comps: usize, data: Vec<f64>) -> Result<Self> {
        let expected = comps * space.grid().points();
        if data.len() != expected {
            return Err(Error::Components { expected, found: data.len() });
        }
        Ok(Self { space: space.clone(), comps, data })
    }

    /// Samples a function of the grid coordinates into a scalar field.
    pub fn from_fn(space: &Space, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let grid = *space.grid();
        let data = (0..grid.points()).map(|i| f(&grid.coords(i))).collect();
        Self { space: space.clone(), comps: 1, data }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn points(&self) -> usize {
        self.space.grid().points()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let p = self.points();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.points();
        &mut self.data[c * p..(c + 1) * p]
    }

    /// Forward transform, truncated to the band and symmetrized.
    pub fn to_spectral(&self) -> SpectralField {
        let grid = *self.space.grid();
        let npts = grid.points();
        let m = self.space.len();
        let full = self.space.full_index();
        let neg = self.space.conjugate_slot();
        let engine = self.space.engine();
        let norm = 1.0 / npts as f64;
        let mut out = SpectralField::zeros(&self.space, self.comps);
        let mut buf = vec![ZERO; npts];
        let mut c = 0;
        while c < self.comps {
            let pair = c + 1 < self.comps;
            if pair {
                for (i, z) in buf.iter_mut().enumerate() {
                    *z = C64::new(self.data[c * npts + i], self.data[(c + 1) * npts + i]);
                }
            } else {
                for (i, z) in buf.iter_mut().enumerate() {
                    *z = C64::new(self.data[c * npts + i], 0.0);
                }
            }
            engine.forward(&mut buf);
            for s in 0..m {
                let zk = buf[full[s]] * norm;
                let zn = buf[full[neg[s]]].conj() * norm;
                out.data[c * m + s] = (zk + zn) * 0.5;
                if pair {
                    out.data[(c + 1) * m + s] = (zk - zn) * C64::new(0.0, -0.5);
                }
            }
            c += 2;
        }
        out
    }

    /// Pointwise product; a scalar operand multiplies every component of the
    /// other.
    pub fn mul(&self, other: &Phys) -> Phys {
        let p = self.points();
        if self.comps == other.comps {
            let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
            Phys { space: self.space.clone(), comps: self.comps, data }
        } else if other.comps == 1 {
            let mut data = self.data.clone();
            for c in 0..self.comps {
                for (x, b) in data[c * p..(c + 1) * p].iter_mut().zip(&other.data) {
                    *x *= b;
                }
            }
            Phys { space: self.space.clone(), comps: self.comps, data }
        } else if self.comps == 1 {
            other.mul(self)
        } else {
            panic!("pointwise product of {} and {} components", self.comps, other.comps);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Phys {
        Phys { space: self.space.clone(), comps: self.comps, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add(&self, other: &Phys) -> Phys {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Phys { space: self.space.clone(), comps: self.comps, data }
    }

    pub fn sub(&self, other: &Phys) -> Phys {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Phys { space: self.space.clone(), comps: self.comps, data }
    }

    pub fn scale(&self, a: f64) -> Phys {
        self.map(|x| a * x)
    }

    /// Pointwise Euclidean magnitude across components.
    pub fn magnitude(&self) -> Vec<f64> {
        let p = self.points();
        (0..p)
            .map(|i| (0..self.comps).map(|c| self.data[c * p + i].powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    /// `‖u‖_{L^p}` by uniform-grid quadrature; `p = ∞` is the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let mag = self.magnitude();
        if p.is_infinite() {
            return mag.iter().fold(0.0, |a, &b| a.max(b));
        }
        let h = self.space.grid().cell_volume();
        let peak = mag.iter().fold(0.0, |a: f64, &b| a.max(b));
        if peak == 0.0 {
            return 0.0;
        }
        let s: f64 = mag.iter().map(|&m| (m / peak).powf(p)).sum();
        peak * (s * h).powf(1.0 / p)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Grid mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let p = self.points() as f64;
        (0..self.comps).map(|c| self.comp(c).iter().sum::<f64>() / p).collect()
    }
}

/// Fields sampled on a uniform time grid `t_i = i·dt`, `i = 0..=M`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub fields: Vec<SpectralField>,
}

impl Trajectory {
    pub fn new(dt: f64, fields: Vec<SpectralField>) -> Self {
        Self { dt, fields }
    }

    pub fn constant(field: &SpectralField, steps: usize, dt: f64) -> Self {
        Self { dt, fields: vec![field.clone(); steps + 1] }
    }

    pub fn zeros(space: &Space, comps: usize, steps: usize, dt: f64) -> Self {
        Self::constant(&SpectralField::zeros(space, comps), steps, dt)
    }

    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.fields.len()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn last(&self) -> &SpectralField {
        self.fields.last().expect("empty trajectory")
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> Self {
        Self { dt: self.dt, fields: self.fields.iter().map(f).collect() }
    }

    pub fn zip_map(&self, other: &Trajectory, f: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> Self {
        Self { dt: self.dt, fields: self.fields.iter().zip(&other.fields).map(|(a, b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Trajectory) -> Self {
        self.zip_map(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Trajectory) -> Self {
        self.zip_map(other, |a, b| a.sub(b))
    }

    /// Second-order time derivative: centered inside, one-sided three-point
    /// at both ends.
    pub fn derivative(&self) -> Self {
        let m = self.steps();
        let h = self.dt;
        let f = &self.fields;
        if m == 0 {
            return self.map(|u| u.scale(0.0));
        }
        if m == 1 {
            let d = f[1].sub(&f[0]).scale(1.0 / h);
            return Self { dt: h, fields: vec![d.clone(), d] };
        }
        let mut out = Vec::with_capacity(m + 1);
        out.push(f[0].scale(-1.5).add(&f[1].scale(2.0)).sub(&f[2].scale(0.5)).scale(1.0 / h));
        for i in 1..m {
            out.push(f[i + 1].sub(&f[i - 1]).scale(0.5 / h));
        }
        out.push(f[m].scale(1.5).sub(&f[m - 1].scale(2.0)).add(&f[m - 2].scale(0.5)).scale(1.0 / h));
        Self { dt: h, fields: out }
    }

    /// Backward differences `(u_i − u_{i−1})/dt`, with the first value
    /// repeated at `t = 0`.
    pub fn backward_difference(&self) -> Self {
        let m = self.steps();
        if m == 0 {
            return self.map(|u| u.scale(0.0));
        }
        let mut out: Vec<SpectralField> =
            (1..=m).map(|i| self.fields[i].sub(&self.fields[i - 1]).scale(1.0 / self.dt)).collect();
        out.insert(0, out[0].clone());
        Self { dt: self.dt, fields: out }
    }

    /// Largest L² distance over the stored times.
    pub fn max_l2_distance(&self, other: &Trajectory) -> f64 {
        self.fields.iter().zip(&other.fields).map(|(a, b)| a.sub(b).l2_norm()).fold(0.0, f64::max)
    }
}
