mod common;

use besovns::besov::{besov_norm, dilate, lp_norm, shell_norms, BesovIndex};
use besovns::spectral::{dyadic_block, phi, read_snapshot, write_snapshot, Snapshot, SpectralField};
use common::*;
use proptest::prelude::*;

#[test]
fn partition_of_unity_on_resolved_band() {
    for dim in [2, 3] {
        let sp = space(dim, 64);
        let part = sp.partition();
        for &r in sp.xi_abs().iter().filter(|&&r| r > 0.0) {
            let s: f64 = part.shells().map(|j| phi((-j as f64).exp2() * r)).sum();
            let s2: f64 = part.shells().map(|j| phi((-j as f64).exp2() * r).powi(2)).sum();
            assert!((s - 1.0).abs() <= 1e-12, "Σφ = {s} at |ξ| = {r}");
            assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&s2), "Σφ² = {s2} at |ξ| = {r}");
        }
    }
}

#[test]
fn blocks_sum_to_mean_free_field() {
    let sp = space(2, 32);
    let u = scalar(&sp, 0.5, 3);
    let part = sp.partition();
    let mut acc = SpectralField::zeros(&sp, 1);
    for j in part.shells() {
        acc = acc.add(&dyadic_block(&u, j).unwrap());
    }
    assert!(rel(&acc, &u) < 1e-13);
}

#[test]
fn dilation_rescales_by_critical_power() {
    for dim in [2, 3] {
        let n = if dim == 2 { 64 } else { 32 };
        let sp = space(dim, n);
        let nf = dim as f64;
        for seed in 0..4 {
            let u = scalar(&sp, nf / 2.0, seed);
            let v = dilate(&u).unwrap();
            for (s, p) in [(nf / 2.0 - 1.0, 2.0), (nf / 2.0, 2.0), (nf / 3.0 - 1.0, 3.0)] {
                let idx = BesovIndex::new(s, p, 1.0).unwrap();
                let expected = (s - nf / p).exp2();
                let got = besov_norm(&v, idx) / besov_norm(&u, idx);
                assert!((got / expected - 1.0).abs() <= 0.01, "dim {dim} (s,p) = ({s},{p}): {got} vs {expected}");
            }
        }
    }
}

#[test]
fn l2_shells_match_parseval_on_single_mode() {
    let sp = space(2, 64);
    let u = SpectralField::mode(&sp, [3, 0, 0], 1.0, false).unwrap();
    let vol = (2.0 * std::f64::consts::PI).powi(2);
    // cos(3x): ‖·‖²_{L²} = vol/2, a single shell at |ξ| = 3 where φ sums to 1
    let total: f64 = shell_norms(&u, 2.0).iter().map(|(_, v)| v * v).sum();
    let direct = vol / 2.0;
    assert!(total <= direct * (1.0 + 1e-12));
    assert!((lp_norm(&u, 2.0) - direct.sqrt()).abs() < 1e-10);
}

#[test]
fn snapshot_file_round_trip() {
    let sp = space(3, 16);
    let u = random_field_vec(&sp, 3, 9);
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &Snapshot::of(&u)).unwrap();
    assert_eq!(&buf[..4], b"BNSF");
    let back = read_snapshot(&mut buf.as_slice()).unwrap().to_field().unwrap();
    assert!(back.max_diff(&u) < 1e-14);
}

fn random_field_vec(sp: &besovns::spectral::Space, comps: usize, seed: u64) -> SpectralField {
    besovns::spectral::random_field(sp, comps, besovns::spectral::FieldSpectrum::full(1.0), &mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn besov_norm_is_homogeneous_and_subadditive(seed in 0u64..1000, lambda in -5.0f64..5.0, s in -1.0f64..2.0, p in prop::sample::select(vec![1.0, 2.0, 3.0, f64::INFINITY])) {
        let sp = space(2, 32);
        let u = scalar(&sp, 1.0, seed);
        let v = scalar(&sp, 1.0, seed + 7919);
        let idx = BesovIndex::new(s, p, 1.0).unwrap();
        let nu = besov_norm(&u, idx);
        prop_assert!((besov_norm(&u.scale(lambda), idx) - lambda.abs() * nu).abs() <= 1e-10 * nu.max(1.0));
        prop_assert!(besov_norm(&u.add(&v), idx) <= (nu + besov_norm(&v, idx)) * (1.0 + 1e-12));
    }

    #[test]
    fn leray_projection_is_idempotent_and_solenoidal(seed in 0u64..1000) {
        let sp = space(2, 16);
        let u = random_field_vec(&sp, 2, seed);
        let pu = u.leray().unwrap();
        prop_assert!(pu.divergence().l2_norm() <= 1e-12 * u.l2_norm());
        prop_assert!(pu.leray().unwrap().max_diff(&pu) <= 1e-14);
        let q = u.gradient_part().unwrap();
        prop_assert!(pu.add(&q).max_diff(&u.clone().without_mean()) <= 1e-13);
    }
}
