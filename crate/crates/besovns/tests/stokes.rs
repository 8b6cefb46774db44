mod common;

use besovns::elliptic::{solve_pressure, CoefficientField};
use besovns::spectral::{random_field, FieldSpectrum, SpectralField, Trajectory};
use besovns::stokes::{
    constant_stokes_solve, perturbed_stokes_solve, splitting_diagnostics, stokes_residual, variable_stokes_solve, StokesConfig, StokesData,
};
use common::*;

fn shear_mode(sp: &besovns::spectral::Space, k: i64) -> SpectralField {
    let m = SpectralField::mode(sp, [0, k, 0], 1.0, true).unwrap();
    SpectralField::stack(&[m, SpectralField::zeros(sp, 1)]).unwrap()
}

#[test]
fn free_mode_decays_exactly() {
    let sp = space(2, 32);
    let (abar, bbar) = (0.7, 1.3);
    let u0 = shear_mode(&sp, 3);
    let dt = 0.05;
    let sol = constant_stokes_solve(&StokesData::free(u0.clone(), 20, dt).unwrap(), abar, bbar).unwrap();
    for (i, u) in sol.u.fields.iter().enumerate() {
        let exact = u0.scale((-abar * bbar * 9.0 * i as f64 * dt).exp());
        assert!(rel(u, &exact) <= 1e-12, "step {i}");
    }
    assert!(sol.grad_p.fields.iter().all(|g| g.max_abs_coefficient() < 1e-15));
}

/// `α' = −λα + cos 3t`, `α(0) = 0`.
fn forced_amplitude(lambda: f64, t: f64) -> f64 {
    (lambda * (3.0 * t).cos() + 3.0 * (3.0 * t).sin() - lambda * (-lambda * t).exp()) / (lambda * lambda + 9.0)
}

fn forced_error(steps: usize) -> f64 {
    let sp = space(2, 16);
    let e = shear_mode(&sp, 2);
    let horizon = 1.0;
    let dt = horizon / steps as f64;
    let f = Trajectory::new(dt, (0..=steps).map(|i| e.scale((3.0 * i as f64 * dt).cos())).collect());
    let sol = constant_stokes_solve(&StokesData::forced(f).unwrap(), 1.0, 1.0).unwrap();
    sol.u.fields.iter().enumerate().map(|(i, u)| u.sub(&e.scale(forced_amplitude(4.0, i as f64 * dt))).l2_norm()).fold(0.0, f64::max) / e.l2_norm()
}

#[test]
fn forced_mode_converges_at_second_order() {
    let (e1, e2, e3) = (forced_error(20), forced_error(40), forced_error(80));
    assert!(e1 < 1e-3);
    assert!(e1 / e2 > 3.7 && e2 / e3 > 3.7, "{e1:e} {e2:e} {e3:e}");
}

#[test]
fn gradient_forcing_goes_into_pressure() {
    let sp = space(2, 16);
    let g = random_field(&sp, 1, FieldSpectrum::full(1.0), &mut rng(3)).gradient();
    let dt = 0.1;
    let f = Trajectory::new(dt, (0..=5).map(|i| g.scale(1.0 + i as f64)).collect());
    let sol = constant_stokes_solve(&StokesData::forced(f.clone()).unwrap(), 2.0, 1.0).unwrap();
    for (u, (p, f)) in sol.u.fields.iter().zip(sol.grad_p.fields.iter().zip(&f.fields)) {
        assert!(u.max_abs_coefficient() < 1e-14);
        assert!(rel(p, &f.scale(0.5)) < 1e-13);
    }
}

#[test]
fn constraint_field_is_matched() {
    let sp = space(3, 16);
    let g = random_field(&sp, 1, FieldSpectrum::band(1.0, 4.0, 1.0), &mut rng(4)).gradient();
    let dt = 0.02;
    let r = Trajectory::new(dt, (0..=10).map(|i| g.scale((i as f64 * dt).sin() + 1.0)).collect());
    let data = StokesData::new(r.fields[0].clone(), Trajectory::zeros(&sp, 3, 10, dt), r.clone()).unwrap();
    let sol = constant_stokes_solve(&data, 1.0, 1.0).unwrap();
    for (u, r) in sol.u.fields.iter().zip(&r.fields) {
        let qr = r.gradient_part().unwrap();
        assert!(rel(&u.gradient_part().unwrap(), &qr) <= 1e-12);
    }
}

fn variable_instance(steps: usize, horizon: f64) -> (CoefficientField, CoefficientField, StokesData) {
    let sp = space(2, 32);
    let mut r = rng(21);
    let a = CoefficientField::random(&sp, 1.0, 0.3, FieldSpectrum::band(1.0, 4.0, 1.0), &mut r).unwrap();
    let b = CoefficientField::random(&sp, 1.0, 0.3, FieldSpectrum::band(1.0, 4.0, 1.0), &mut r).unwrap();
    let u0 = random_field(&sp, 2, FieldSpectrum::band(1.0, 6.0, 3.0), &mut r).leray().unwrap();
    let ff = random_field(&sp, 2, FieldSpectrum::band(1.0, 6.0, 3.0), &mut r);
    let dt = horizon / steps as f64;
    let f = Trajectory::new(dt, (0..=steps).map(|i| ff.scale((3.0 * i as f64 * dt).cos())).collect());
    let data = StokesData::new(u0, f, Trajectory::zeros(&sp, 2, steps, dt)).unwrap();
    (a, b, data)
}

#[test]
fn variable_residual_is_second_order() {
    let cfg = StokesConfig { three_step: false, ..StokesConfig::default() };
    let mut res = Vec::new();
    for steps in [25, 50] {
        let (a, b, data) = variable_instance(steps, 0.25);
        let sol = variable_stokes_solve(&data, &a, &b, &cfg).unwrap();
        assert_eq!(sol.homotopy.iter().filter(|h| h.accepted).map(|h| h.theta).fold(0.0, f64::max), 1.0);
        let r = stokes_residual(&sol, &data, &a, &b);
        assert!(r.max_constraint() < 1e-10);
        res.push(r.max_momentum());
    }
    let ratio = res[0] / res[1];
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn constant_coefficients_reduce_to_constant_solver() {
    let (_, _, data) = variable_instance(10, 0.1);
    let sp = data.space().clone();
    let a = CoefficientField::constant(&sp, 1.2).unwrap();
    let b = CoefficientField::constant(&sp, 0.8).unwrap();
    let v = variable_stokes_solve(&data, &a, &b, &StokesConfig::default()).unwrap();
    let c = constant_stokes_solve(&data, 1.2, 0.8).unwrap();
    for (x, y) in v.u.fields.iter().zip(&c.u.fields) {
        assert!(x.max_diff(y) < 1e-14);
    }
}

#[test]
fn perturbed_pressure_matches_elliptic_oracle() {
    let (a, _, data) = variable_instance(10, 0.1);
    let sp = data.space().clone();
    let c = a.deviation().scale(0.01 / 0.3);
    let sol = perturbed_stokes_solve(&data, 1.0, 1.0, &c, &StokesConfig::default()).unwrap();
    let ac = CoefficientField::from_spectral(c.add(&SpectralField::constant(&sp, 1.0))).unwrap();
    for (f, gp) in data.f.fields.iter().zip(&sol.grad_p.fields) {
        let oracle = solve_pressure(&ac, f, 1e-12).unwrap().grad_p;
        assert!(rel(gp, &oracle) <= 1e-6);
    }
}

#[test]
fn three_step_split_reassembles_solution() {
    let (a, b, data) = variable_instance(10, 0.1);
    let sol = variable_stokes_solve(&data, &a, &b, &StokesConfig::default()).unwrap();
    let split = sol.split.expect("split computed");
    let total = besovns::stokes::energy_norm(&sol.u, &sol.grad_p, 2.0);
    assert!(split.defect <= 1e-6 * total, "{} vs {}", split.defect, total);
}

#[test]
fn high_frequency_tail_shrinks_with_cutoff() {
    let (a, b, _) = variable_instance(2, 0.1);
    let rep = splitting_diagnostics(&a, &b, None, 0.1, 2.0).unwrap();
    for w in rep.sweep.windows(2) {
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-12), "{:?}", rep.sweep);
    }
    assert!(rep.t1 <= 0.1);
}
