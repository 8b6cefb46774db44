mod common;

use besovns::bony::{bony_split, commutator_gain, paraproduct, reconstruction_defect};
use besovns::spectral::{random_field, FieldSpectrum, SpectralField, Symbol};
use common::*;
use proptest::prelude::*;

#[test]
fn dealiased_product_equals_truncated_convolution() {
    let sp = space(2, 16);
    let u = scalar(&sp, 0.5, 1);
    let v = scalar(&sp, 0.5, 2);
    let oracle = convolve(&u, &v);
    let got = u.product(&v);
    let err = got.comp(0).iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = oracle.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err <= 1e-13 * scale, "max error {err}");
}

#[test]
fn bony_pieces_reconstruct_product_on_mean_zero_pairs() {
    let sp = space(2, 64);
    for seed in 0..10 {
        let u = scalar(&sp, 1.0, 2 * seed);
        let v = scalar(&sp, 1.0, 2 * seed + 1);
        let split = bony_split(&u, &v).unwrap();
        let direct = SpectralField::from_coefficients(&sp, 1, convolve(&u, &v)).unwrap();
        assert!(rel(&split.sum(), &direct) <= 1e-10);
    }
}

#[test]
fn low_high_paraproduct_keeps_high_frequency_support() {
    let sp = space(2, 64);
    let lo = SpectralField::mode(&sp, [1, 0, 0], 1.0, false).unwrap();
    let hi = SpectralField::mode(&sp, [0, 16, 0], 1.0, true).unwrap();
    let t = paraproduct(&lo, &hi).unwrap();
    // cos x sin 16y has modes (±1, ±16) only
    for (k, z) in sp.modes().iter().zip(t.comp(0)) {
        if z.norm() > 1e-14 {
            assert_eq!((k[0].abs(), k[1].abs()), (1, 16));
        }
    }
}

#[test]
fn leray_commutator_gains_on_separated_inputs() {
    let sp = space(2, 64);
    let mut r = rng(5);
    let a = random_field(&sp, 1, FieldSpectrum::band(1.0, 2.0, 0.0), &mut r);
    let w = random_field(&sp, 1, FieldSpectrum::band(16.0, 20.0, 0.0), &mut r);
    let g = commutator_gain(&Symbol::leray(0, 1), &a, &w, 0.0, 0.0, 2.0).unwrap();
    assert!(g.commutator_norm > 0.0);
    assert!(g.no_gain_bound >= 4.0 * g.commutator_norm, "{g:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reconstruction_defect_is_roundoff(seed in 0u64..10_000, decay in 0.0f64..2.0) {
        let sp = space(2, 32);
        let u = scalar(&sp, decay, seed);
        let v = scalar(&sp, decay, seed ^ 0xabcdef);
        prop_assert!(reconstruction_defect(&u, &v).unwrap() <= 1e-12);
    }
}
