use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;

/// Multidimensional complex FFT on the full grid, pruned to the lines that
/// touch the dealiasing band.
pub(crate) struct Engine {
    dim: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // per axis: starting offsets of the lines that must be transformed
    inverse_lines: Vec<Vec<usize>>,
    forward_lines: Vec<Vec<usize>>,
}

fn band_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Engine {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.size;
        let dim = grid.dim;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let cut2 = (n as f64 / 3.0).powi(2);
        let inside = |k: i64| ((k * k) as f64) < cut2;
        let stride = |axis: usize| n.pow((dim - 1 - axis) as u32);
        let mut lines_all = Vec::new();
        for axis in 0..dim {
            let s = stride(axis);
            let mut starts = Vec::new();
            for base in 0..n.pow(dim as u32) {
                if (base / s) % n == 0 {
                    starts.push(base);
                }
            }
            lines_all.push(starts);
        }
        let index_of = |base: usize, axis: usize| band_index((base / stride(axis)) % n, n);
        // A line along `axis` at step m of the inverse pass (axes processed
        // last to first) only carries data if the axes not yet transformed
        // lie inside the band.
        let mut inverse_lines = vec![Vec::new(); dim];
        for axis in 0..dim {
            inverse_lines[axis] = lines_all[axis]
                .iter()
                .copied()
                .filter(|&b| {
                    let earlier: Vec<i64> = (0..axis).map(|a| index_of(b, a)).collect();
                    let r2: i64 = earlier.iter().map(|k| k * k).sum();
                    earlier.iter().all(|&k| inside(k)) && (r2 as f64) < cut2
                })
                .collect();
        }
        let forward_lines = inverse_lines.clone();
        Engine { dim, size: n, forward, inverse, inverse_lines, forward_lines }
    }

    fn stride(&self, axis: usize) -> usize {
        self.size.pow((self.dim - 1 - axis) as u32)
    }

    fn pass(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>, lines: &[usize]) {
        let n = self.size;
        let s = self.stride(axis);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if s == 1 {
            for &b in lines {
                fft.process_with_scratch(&mut data[b..b + n], &mut scratch);
            }
            return;
        }
        // gather blocks of lines so rustfft can batch them
        const BATCH: usize = 64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * BATCH];
        for chunk in lines.chunks(BATCH) {
            let m = chunk.len();
            for (l, &b) in chunk.iter().enumerate() {
                for i in 0..n {
                    buf[l * n + i] = data[b + i * s];
                }
            }
            fft.process_with_scratch(&mut buf[..m * n], &mut scratch);
            for (l, &b) in chunk.iter().enumerate() {
                for i in 0..n {
                    data[b + i * s] = buf[l * n + i];
                }
            }
        }
    }

    /// In-place inverse transform (unnormalized) of a band-supported array.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in (0..self.dim).rev() {
            self.pass(data, axis, &self.inverse, &self.inverse_lines[axis]);
        }
    }

    /// In-place forward transform (unnormalized); only band entries are valid
    /// afterwards.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.dim {
            self.pass(data, axis, &self.forward, &self.forward_lines[axis]);
        }
    }
}
