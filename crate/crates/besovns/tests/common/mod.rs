#![allow(dead_code)]

use std::collections::HashMap;

use besovns::elliptic::CoefficientField;
use besovns::spectral::{random_field, Basis, FieldSpectrum, Grid, Space, SpectralField, C64};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn space(dim: usize, n: usize) -> Space {
    Basis::new(Grid::periodic(dim, n).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scalar(sp: &Space, decay: f64, seed: u64) -> SpectralField {
    random_field(sp, 1, FieldSpectrum::full(decay), &mut rng(seed))
}

/// Coefficients of component `c` keyed by integer mode.
pub fn coefficient_map(u: &SpectralField, c: usize) -> HashMap<[i64; 3], C64> {
    u.space().modes().iter().copied().zip(u.comp(c).iter().copied()).collect()
}

/// Band truncation of the exact convolution `Σ_{k=m+l} û_m v̂_l`.
pub fn convolve(u: &SpectralField, v: &SpectralField) -> Vec<C64> {
    let sp = u.space();
    let vm = coefficient_map(v, 0);
    sp.modes()
        .iter()
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for (m, a) in sp.modes().iter().zip(u.comp(0)) {
                if let Some(b) = vm.get(&[k[0] - m[0], k[1] - m[1], k[2] - m[2]]) {
                    acc += a * b;
                }
            }
            acc
        })
        .collect()
}

/// Direct evaluation of the Fourier series of component `c` at `x`.
pub fn evaluate(u: &SpectralField, c: usize, x: &[f64; 3]) -> f64 {
    let sp = u.space();
    let mut acc = 0.0;
    for (xi, z) in sp.xi().iter().zip(u.comp(c)) {
        let phase = xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2];
        acc += (z * C64::new(phase.cos(), phase.sin())).re;
    }
    acc
}

pub fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.sub(b).l2_norm() / b.l2_norm()
}

/// Dense Galerkin solve of `div(a∇P) = div f` on the stored band:
/// `−Σ_m (ξ_k·ξ_m) â(k−m) P̂(m) = i ξ_k·f̂(k)` for `k ≠ 0`.
pub fn dense_oracle(a: &CoefficientField, f: &SpectralField) -> SpectralField {
    let sp = a.space().clone();
    let n = sp.dim();
    let am = coefficient_map(&a.values, 0);
    let idx: Vec<usize> = (0..sp.len()).filter(|&s| sp.xi_abs()[s] > 0.0).collect();
    let modes = sp.modes();
    let xi = sp.xi();
    let dot = |x: &[f64; 3], y: &[f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let m = idx.len();
    let mut mat = DMatrix::<C64>::zeros(m, m);
    let mut rhs = DVector::<C64>::zeros(m);
    for (r, &k) in idx.iter().enumerate() {
        for (c, &l) in idx.iter().enumerate() {
            let d = [modes[k][0] - modes[l][0], modes[k][1] - modes[l][1], modes[k][2] - modes[l][2]];
            if let Some(z) = am.get(&d) {
                mat[(r, c)] = -z * dot(&xi[k], &xi[l]);
            }
        }
        let mut s = C64::new(0.0, 0.0);
        for d in 0..n {
            s += C64::new(0.0, xi[k][d]) * f.comp(d)[k];
        }
        rhs[r] = s;
    }
    let p = mat.lu().solve(&rhs).expect("nonsingular Galerkin matrix");
    let mut grad = vec![C64::new(0.0, 0.0); n * sp.len()];
    for (r, &k) in idx.iter().enumerate() {
        for d in 0..n {
            grad[d * sp.len() + k] = C64::new(0.0, xi[k][d]) * p[r];
        }
    }
    SpectralField::from_coefficients(&sp, n, grad).unwrap()
}
