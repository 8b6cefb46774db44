use crate::error::{Error, Result};

use super::{band_modes, Grid};

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial low-frequency profile: `1` on `|ξ| ≤ 3/4`, `0` on `|ξ| ≥ 1`, C^∞.
pub fn chi(r: f64) -> f64 {
    1.0 - smooth_step(4.0 * r - 3.0)
}

/// Annular profile `φ(ξ) = χ(ξ/2) − χ(ξ)`, supported in `3/4 ≤ |ξ| ≤ 2` and
/// equal to `1` on `1 ≤ |ξ| ≤ 3/2`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// The dyadic family `φ(2^{-j}·)`, `j ∈ [j_min, j_max]`, sampled on the band.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    pub j_min: i32,
    pub j_max: i32,
    masks: Vec<Vec<f64>>,
    chi_mask: Vec<f64>,
}

/// Builds the partition for the dealiased band of `grid`.
///
/// `j_max` is the smallest index whose shells cover the whole band, so the
/// identity `Σφ = 1` holds on every resolved `ξ ≠ 0`.
pub fn build_partition(grid: &Grid) -> Result<DyadicPartition> {
    let kf = grid.base_frequency();
    let j_min = kf.log2().ceil() as i32 - 1;
    let j_max = (2.0 * grid.band_radius() / 3.0).log2().ceil() as i32;
    let shells = j_max - j_min + 1;
    if shells < 3 {
        return Err(Error::InsufficientResolution { shells });
    }
    let radii: Vec<f64> = band_modes(grid)
        .iter()
        .map(|k| kf * ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt())
        .collect();
    let masks: Vec<Vec<f64>> = (j_min..=j_max)
        .map(|j| {
            let scale = (-j as f64).exp2();
            radii.iter().map(|&r| phi(scale * r)).collect()
        })
        .collect();
    let chi_mask = (0..radii.len())
        .map(|s| 1.0 - masks.iter().map(|m| m[s]).sum::<f64>())
        .collect();
    Ok(DyadicPartition { j_min, j_max, masks, chi_mask })
}

impl DyadicPartition {
    pub fn shells(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn contains(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    pub fn check(&self, j: i32) -> Result<()> {
        if self.contains(j) {
            Ok(())
        } else {
            Err(Error::Range { j, lo: self.j_min, hi: self.j_max })
        }
    }

    /// Mask of shell `j` on the band slots; zero outside the dyadic range.
    pub fn mask(&self, j: i32) -> Option<&[f64]> {
        if self.contains(j) {
            Some(&self.masks[(j - self.j_min) as usize])
        } else {
            None
        }
    }

    /// Residual low block `1 − Σ_j φ(2^{-j}ξ)`; on the grid only `k = 0`.
    pub fn chi_mask(&self) -> &[f64] {
        &self.chi_mask
    }

    /// Largest defect `|Σ_j φ(2^{-j}ξ) − 1|` over resolved `ξ ≠ 0`.
    pub fn unity_defect(&self) -> f64 {
        (1..self.chi_mask.len()).map(|s| self.chi_mask[s].abs()).fold(0.0, f64::max)
    }

    /// Range `(min, max)` of `Σ_j φ²(2^{-j}ξ)` over resolved `ξ ≠ 0`.
    pub fn square_sum_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 1..self.chi_mask.len() {
            let q: f64 = self.masks.iter().map(|m| m[s] * m[s]).sum();
            lo = lo.min(q);
            hi = hi.max(q);
        }
        (lo, hi)
    }

    /// True when every pair of masks with `|j − j′| ≥ 2` has disjoint support.
    pub fn separated(&self) -> bool {
        let k = self.masks.len();
        for a in 0..k {
            for b in a + 2..k {
                if self.masks[a].iter().zip(&self.masks[b]).any(|(x, y)| *x != 0.0 && *y != 0.0) {
                    return false;
                }
            }
        }
        true
    }
}
