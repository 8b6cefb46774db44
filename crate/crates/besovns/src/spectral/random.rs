use rand::Rng;

use super::{SpectralField, Space, C64};

/// Amplitude profile for random band-limited fields: modes with
/// `k_min ≤ |ξ| ≤ k_max` receive Gaussian coefficients scaled by
/// `|ξ|^{-decay}` times a per-shell factor drawn once per field.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct FieldSpectrum {
    pub k_min: f64,
    pub k_max: f64,
    pub decay: f64,
}

impl FieldSpectrum {
    pub fn band(k_min: f64, k_max: f64, decay: f64) -> Self {
        Self { k_min, k_max, decay }
    }

    /// Every resolved nonzero mode, amplitude `|ξ|^{-decay}`.
    pub fn full(decay: f64) -> Self {
        Self { k_min: 0.0, k_max: f64::INFINITY, decay }
    }
}

/// Standard normal sample (Box–Muller).
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random real mean-zero field with the given spectrum.
pub fn random_field<R: Rng + ?Sized>(space: &Space, comps: usize, spectrum: FieldSpectrum, rng: &mut R) -> SpectralField {
    let part = space.partition();
    let shell_factor: Vec<f64> = part.shells().map(|_| 0.5 + rng.gen::<f64>()).collect();
    let m = space.len();
    let neg = space.conjugate_slot();
    let xi_abs = space.xi_abs();
    let mut u = SpectralField::zeros(space, comps);
    for c in 0..comps {
        let data = u.comp_mut(c);
        for s in 1..m {
            let r = xi_abs[s];
            if r < spectrum.k_min || r > spectrum.k_max || neg[s] < s {
                continue;
            }
            let j = (part.j_min..=part.j_max)
                .max_by(|&a, &b| {
                    let ma = part.mask(a).unwrap()[s];
                    let mb = part.mask(b).unwrap()[s];
                    ma.partial_cmp(&mb).unwrap()
                })
                .unwrap();
            let amp = shell_factor[(j - part.j_min) as usize] * r.powf(-spectrum.decay);
            let z = C64::new(gaussian(rng), gaussian(rng)) * (amp / std::f64::consts::SQRT_2);
            data[s] = z;
            data[neg[s]] = z.conj();
        }
    }
    u
}
