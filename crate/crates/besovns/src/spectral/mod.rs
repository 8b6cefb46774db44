//! Periodic grids, band-limited spectral fields, the dyadic partition of
//! unity and the Fourier multipliers built on it.
//!
//! Fields only carry the Fourier coefficients inside the dealiasing ball
//! `|k| < N/3`. Quadratic products formed on the grid and truncated back to
//! the ball are therefore free of aliasing.

mod fft;
mod field;
mod partition;
mod random;
mod snapshot;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use field::{Phys, SpectralField, Trajectory};
pub use partition::{build_partition, chi, phi, DyadicPartition};
pub use random::{gaussian, random_field, FieldSpectrum};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

pub type C64 = Complex64;

/// Periodic box `[0, L)^n` sampled with `N` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub size: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(dim: usize, size: usize, length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2, 3}}")));
        }
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N = {size} must be a power of two >= 8")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("L = {length} must be positive")));
        }
        Ok(Self { dim, size, length })
    }

    /// Box of side 2π.
    pub fn periodic(dim: usize, size: usize) -> Result<Self> {
        Self::new(dim, size, 2.0 * PI)
    }

    pub fn points(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.size as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Smallest nonzero frequency `2π/L`.
    pub fn base_frequency(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Radius of the dealiasing ball in frequency units.
    pub fn band_radius(&self) -> f64 {
        self.base_frequency() * self.size as f64 / 3.0
    }

    /// Coordinates of grid point `idx` (row-major, last axis fastest).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let mut x = [0.0; 3];
        let mut rest = idx;
        for d in (0..self.dim).rev() {
            x[d] = (rest % self.size) as f64 * h;
            rest /= self.size;
        }
        x
    }
}

fn signed(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Integer wavevectors of the dealiasing ball `0 < |k| < N/3`, preceded by
/// `k = 0`.
pub(crate) fn band_modes(grid: &Grid) -> Vec<[i64; 3]> {
    let n = grid.size;
    let cut = n as f64 / 3.0;
    let axis: Vec<i64> = (0..n).map(|i| signed(i, n)).collect();
    let mut modes = vec![[0i64; 3]];
    let mut push = |k: [i64; 3]| {
        let r2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if r2 > 0.0 && r2 < cut * cut {
            modes.push(k);
        }
    };
    if grid.dim == 2 {
        for &a in &axis {
            for &b in &axis {
                push([a, b, 0]);
            }
        }
    } else {
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    push([a, b, c]);
                }
            }
        }
    }
    modes
}

/// Band-limited Fourier basis on a grid: mode list, frequencies, FFT plans
/// and the dyadic partition. Shared by every field on the grid.
pub struct Basis {
    grid: Grid,
    modes: Vec<[i64; 3]>,
    full: Vec<usize>,
    neg: Vec<usize>,
    xi: Vec<[f64; 3]>,
    xi_abs: Vec<f64>,
    partition: DyadicPartition,
    fft: fft::Engine,
}

pub type Space = Arc<Basis>;

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Basis")
            .field("grid", &self.grid)
            .field("modes", &self.modes.len())
            .field("j_min", &self.partition.j_min)
            .field("j_max", &self.partition.j_max)
            .finish()
    }
}

impl Basis {
    pub fn new(grid: Grid) -> Result<Space> {
        let n = grid.size;
        let kf = grid.base_frequency();
        let modes = band_modes(&grid);
        let full: Vec<usize> = modes
            .iter()
            .map(|k| {
                let mut idx = 0;
                for d in 0..grid.dim {
                    idx = idx * n + wrap(k[d], n);
                }
                idx
            })
            .collect();
        let mut lookup = std::collections::HashMap::with_capacity(modes.len());
        for (s, k) in modes.iter().enumerate() {
            lookup.insert(*k, s);
        }
        let neg = modes.iter().map(|k| lookup[&[-k[0], -k[1], -k[2]]]).collect();
        let xi: Vec<[f64; 3]> = modes
            .iter()
            .map(|k| [k[0] as f64 * kf, k[1] as f64 * kf, k[2] as f64 * kf])
            .collect();
        let xi_abs = xi.iter().map(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).collect();
        let partition = build_partition(&grid)?;
        let basis = Basis {
            grid,
            modes,
            full,
            neg,
            xi,
            xi_abs,
            partition,
            fft: fft::Engine::new(&grid),
        };
        Ok(Arc::new(basis))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Integer wavevector of each stored slot; slot 0 is `k = 0`.
    pub fn modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    /// Frequencies `ξ = 2πk/L` of each slot.
    pub fn xi(&self) -> &[[f64; 3]] {
        &self.xi
    }

    pub fn xi_abs(&self) -> &[f64] {
        &self.xi_abs
    }

    /// Slot of `-k` for each slot `k`.
    pub fn conjugate_slot(&self) -> &[usize] {
        &self.neg
    }

    pub fn partition(&self) -> &DyadicPartition {
        &self.partition
    }

    /// Slot of an integer wavevector, if it lies in the band.
    pub fn slot_of(&self, k: [i64; 3]) -> Option<usize> {
        self.modes.iter().position(|m| *m == k)
    }

    pub(crate) fn full_index(&self) -> &[usize] {
        &self.full
    }

    pub(crate) fn engine(&self) -> &fft::Engine {
        &self.fft
    }

    /// Same coefficients on the torus of side `L/2`: the exact image of
    /// `x ↦ u(2x)` restricted to one period.
    pub fn dilated(&self) -> Result<Space> {
        Basis::new(Grid::new(self.grid.dim, self.grid.size, self.grid.length / 2.0)?)
    }
}

/// `Δ̇_j u`: Fourier coefficients multiplied by `φ(2^{-j}ξ)`.
pub fn dyadic_block(u: &SpectralField, j: i32) -> Result<SpectralField> {
    let part = u.space().partition();
    part.check(j)?;
    Ok(u.masked(part.mask(j).unwrap()))
}

/// `Ṡ_j u = χ(2^{-j}D)u`, defined for `j ∈ [j_min − 1, j_max + 1]`.
pub fn low_cutoff(u: &SpectralField, j: i32) -> Result<SpectralField> {
    let part = u.space().partition();
    if j < part.j_min - 1 || j > part.j_max + 1 {
        return Err(Error::Range { j, lo: part.j_min - 1, hi: part.j_max + 1 });
    }
    let scale = (-j as f64).exp2();
    let mask: Vec<f64> = u.space().xi_abs().iter().map(|&r| chi(scale * r)).collect();
    Ok(u.masked(&mask))
}

/// `(Id − Ṡ_j)u`.
pub fn high_part(u: &SpectralField, j: i32) -> Result<SpectralField> {
    Ok(u.sub(&low_cutoff(u, j)?))
}

/// Leray split `(Pu, Qu)` of a mean-zero vector field.
pub fn leray_split(u: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    u.leray_split()
}

/// Homogeneous Fourier symbol of a given degree.
pub struct Symbol<'a> {
    pub degree: f64,
    pub eval: Box<dyn Fn(&[f64; 3]) -> C64 + Send + Sync + 'a>,
}

impl<'a> Symbol<'a> {
    pub fn new(degree: f64, eval: impl Fn(&[f64; 3]) -> C64 + Send + Sync + 'a) -> Self {
        Self { degree, eval: Box::new(eval) }
    }

    pub fn identity() -> Self {
        Self::new(0.0, |_| C64::new(1.0, 0.0))
    }

    pub fn laplacian() -> Self {
        Self::new(2.0, |x| C64::new(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]), 0.0))
    }

    /// `∂_d`.
    pub fn partial(d: usize) -> Self {
        Self::new(1.0, move |x| C64::new(0.0, x[d]))
    }

    /// Entry `(i, k)` of the gradient projector `Q`: `ξ_iξ_k/|ξ|²`.
    pub fn gradient_projector(i: usize, k: usize) -> Self {
        Self::new(0.0, move |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            C64::new(if r2 == 0.0 { 0.0 } else { x[i] * x[k] / r2 }, 0.0)
        })
    }

    /// Entry `(i, k)` of the Leray projector `P`: `δ_ik − ξ_iξ_k/|ξ|²`.
    pub fn leray(i: usize, k: usize) -> Self {
        Self::new(0.0, move |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let q = if r2 == 0.0 { 0.0 } else { x[i] * x[k] / r2 };
            C64::new(if i == k { 1.0 } else { 0.0 } - q, 0.0)
        })
    }
}

/// `û(ξ) ↦ A(ξ)û(ξ)`. Symbols of negative degree are undefined on a nonzero
/// `k = 0` mode.
pub fn apply_multiplier(symbol: &Symbol<'_>, u: &SpectralField) -> Result<SpectralField> {
    if symbol.degree < 0.0 {
        u.require_mean_zero()?;
    }
    let zero_mode = symbol.degree > 0.0;
    let out = u.multiplier(|x| (symbol.eval)(x));
    Ok(if zero_mode { out.without_mean() } else { out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(dim: usize, n: usize) -> Space {
        Basis::new(Grid::periodic(dim, n).unwrap()).unwrap()
    }

    #[test]
    fn block_at_annulus_center_is_identity() {
        let sp = space(2, 64);
        for j0 in 0..=4 {
            let u = SpectralField::mode(&sp, [1 << j0, 0, 0], 1.0, true).unwrap();
            assert!(dyadic_block(&u, j0).unwrap().max_diff(&u) == 0.0);
        }
        let u = SpectralField::mode(&sp, [1, 0, 0], 1.0, false).unwrap();
        assert!(dyadic_block(&u, 9).is_err());
    }

    #[test]
    fn low_cutoff_limits() {
        let sp = space(3, 16);
        let u = SpectralField::mode(&sp, [4, 1, 0], 1.0, false).unwrap();
        let top = sp.partition().j_max + 1;
        assert!(low_cutoff(&u, top).unwrap().max_diff(&u) == 0.0);
        assert!(low_cutoff(&u, 0).unwrap().max_abs_coefficient() == 0.0);
        assert!(low_cutoff(&u, top + 1).is_err());
    }

    #[test]
    fn multiplier_zero_mode_rules() {
        let sp = space(2, 16);
        let c = SpectralField::constant(&sp, 1.0);
        let inv = Symbol::new(-2.0, |x| C64::new(-1.0 / (x[0] * x[0] + x[1] * x[1]).max(1e-300), 0.0));
        assert!(matches!(apply_multiplier(&inv, &c), Err(Error::UndefinedZeroMode)));
        let u = SpectralField::mode(&sp, [2, 1, 0], 1.0, false).unwrap();
        let lap = apply_multiplier(&Symbol::laplacian(), &u).unwrap();
        assert!(lap.max_diff(&u.scale(-5.0)) < 1e-14);
        assert!(apply_multiplier(&Symbol::identity(), &u).unwrap().max_diff(&u) == 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::periodic(2, 64).is_ok());
        assert!(Grid::periodic(1, 64).is_err());
        assert!(Grid::periodic(3, 12).is_err());
        assert!(Grid::periodic(2, 4).is_err());
        assert!(Grid::new(2, 16, -1.0).is_err());
    }

    #[test]
    fn band_is_symmetric_ball() {
        let b = Basis::new(Grid::periodic(2, 16).unwrap()).unwrap();
        assert_eq!(b.modes()[0], [0, 0, 0]);
        for (s, k) in b.modes().iter().enumerate() {
            let m = b.modes()[b.conjugate_slot()[s]];
            assert_eq!(m, [-k[0], -k[1], -k[2]]);
            assert!(((k[0] * k[0] + k[1] * k[1]) as f64) < (16.0f64 / 3.0).powi(2));
        }
    }

    #[test]
    fn coordinates_row_major() {
        let g = Grid::new(2, 8, 8.0).unwrap();
        assert_eq!(g.coords(9), [1.0, 1.0, 0.0]);
        assert_eq!(g.coords(3), [0.0, 3.0, 0.0]);
    }
}
