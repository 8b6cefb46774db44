mod common;

use besovns::elliptic::{l2_bound_check, solve_pressure, weak_form_defect, CoefficientField, PressureMethod};
use besovns::spectral::{random_field, FieldSpectrum, SpectralField};
use common::*;
use proptest::prelude::*;

fn instance(dim: usize, size: usize, osc: f64, seed: u64) -> (CoefficientField, SpectralField) {
    let sp = space(dim, size);
    let mut r = rng(seed);
    let a = CoefficientField::random(&sp, 1.0, osc, FieldSpectrum::band(1.0, 4.0, 1.0), &mut r).unwrap();
    let f = random_field(&sp, dim, FieldSpectrum::band(1.0, 8.0, 1.0), &mut r);
    (a, f)
}

#[test]
fn matches_dense_direct_solve() {
    for (dim, size, count) in [(2, 16, 10), (3, 8, 5), (3, 16, 2)] {
        for seed in 0..count {
            let (a, f) = instance(dim, size, 0.1, seed);
            let sol = solve_pressure(&a, &f, 1e-12).unwrap();
            let oracle = dense_oracle(&a, &f);
            let err = rel(&sol.grad_p, &oracle);
            assert!(err <= 1e-8, "n = {dim}, N = {size}, seed {seed}: {err:e}");
            let l2 = l2_bound_check(&a, &f, &sol).unwrap();
            assert!(l2.parameters["rhs"].as_f64().unwrap() - l2.parameters["lhs"].as_f64().unwrap() >= -1e-8);
        }
    }
}

#[test]
fn large_oscillation_still_matches_oracle() {
    let (a, f) = instance(2, 16, 0.9, 11);
    let sol = solve_pressure(&a, &f, 1e-12).unwrap();
    assert!(rel(&sol.grad_p, &dense_oracle(&a, &f)) <= 1e-8, "{:?}", sol.method);
}

#[test]
fn constant_coefficient_is_one_step() {
    let sp = space(2, 32);
    let a = CoefficientField::constant(&sp, 2.5).unwrap();
    let f = random_field(&sp, 2, FieldSpectrum::full(1.0), &mut rng(1));
    let sol = solve_pressure(&a, &f, 1e-12).unwrap();
    assert_eq!(sol.iterations, 1);
    assert_eq!(sol.method, PressureMethod::Neumann);
    assert!(rel(&sol.grad_p, &f.gradient_part().unwrap().scale(0.4)) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weak_form_holds_against_random_tests(seed in 0u64..10_000, osc in 0.0f64..0.6) {
        let (a, f) = instance(2, 16, osc, seed);
        let sol = solve_pressure(&a, &f, 1e-12).unwrap();
        let psi = random_field(a.space(), 1, FieldSpectrum::full(1.0), &mut rng(seed + 1));
        prop_assert!(weak_form_defect(&a, &f, &sol, &psi) <= 1e-10);
        prop_assert!(sol.grad_p.gradient().sub(&sol.grad_p.gradient().transpose()).l2_norm() <= 1e-12 * sol.grad_p.gradient().l2_norm());
    }

    #[test]
    fn pressure_is_linear_in_forcing(seed in 0u64..10_000, lambda in -3.0f64..3.0) {
        let (a, f) = instance(2, 16, 0.2, seed);
        let g = random_field(a.space(), 2, FieldSpectrum::full(1.0), &mut rng(seed + 2));
        let p1 = solve_pressure(&a, &f, 1e-13).unwrap().grad_p;
        let p2 = solve_pressure(&a, &g, 1e-13).unwrap().grad_p;
        let p3 = solve_pressure(&a, &f.lincomb(1.0, &g, lambda), 1e-13).unwrap().grad_p;
        prop_assert!(p3.max_diff(&p1.lincomb(1.0, &p2, lambda)) <= 1e-10 * p3.max_abs_coefficient().max(1.0));
    }
}
