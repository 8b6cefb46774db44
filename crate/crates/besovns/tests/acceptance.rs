//! End-to-end acceptance: one line per criterion, `PASS` or `FAIL`.

mod common;

use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::time::Instant;

use besovns::bony::reconstruction_defect;
use besovns::cli::suites::run_suite;
use besovns::cli::{run, without_runtime, ExperimentConfig};
use besovns::elliptic::{l2_bound_check, solve_pressure, CoefficientField};
use besovns::ns_solver::{nonlinear_solve, DensityState, NsConfig, ViscosityLaw};
use besovns::report::EstimateReport;
use besovns::spectral::{random_field, FieldSpectrum, SpectralField};
use besovns::stokes::{constant_stokes_solve, StokesData};
use common::*;
use serde_json::Value;

struct Verdict {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
    started: Instant,
}

impl Verdict {
    fn new(id: usize, title: &'static str) -> Self {
        Verdict { id, title, pass: true, detail: String::new(), started: Instant::now() }
    }

    fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let _ = write!(self.detail, "{}{}", if ok { "" } else { "FAILED " }, what.as_ref());
    }

    fn report(&mut self, reports: &[EstimateReport], id: &str) -> f64 {
        let mut worst = f64::NAN;
        let mut ok = true;
        for r in reports.iter().filter(|r| r.estimate_id == id) {
            ok &= r.pass;
            worst = if worst.is_nan() { r.measured_constant } else { worst.max(r.measured_constant) };
        }
        self.check(ok && !worst.is_nan(), format!("{id} = {worst:.3e}"));
        worst
    }

    fn finish(self) {
        let _ = writeln!(
            std::io::stderr(),
            "criterion {:>2} {}: {} ({:.1} s) {}",
            self.id,
            self.title,
            if self.pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64(),
            self.detail
        );
        assert!(self.pass, "criterion {} failed: {}", self.id, self.detail);
    }
}

fn suite(src: &str) -> Vec<EstimateReport> {
    run_suite(&ExperimentConfig::parse(src).unwrap()).unwrap().reports
}

fn annulus(r: f64) -> f64 {
    let step = |t: f64| {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
        }
    };
    let chi = |r: f64| 1.0 - step(4.0 * r - 3.0);
    chi(0.5 * r) - chi(r)
}

#[test]
fn criterion_01_partition_identities() {
    let mut v = Verdict::new(1, "partition identities");
    for dim in [2, 3] {
        let sp = space(dim, 64);
        let part = sp.partition();
        let (mut unity, mut lo, mut hi, mut mask_err): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0);
        for s in (0..sp.len()).filter(|&s| sp.xi_abs()[s] > 0.0) {
            let phis: Vec<f64> = part.shells().map(|j| annulus((-j as f64).exp2() * sp.xi_abs()[s])).collect();
            for (j, x) in part.shells().zip(&phis) {
                mask_err = mask_err.max((part.mask(j).unwrap()[s] - x).abs());
            }
            unity = unity.max((phis.iter().sum::<f64>() - 1.0).abs());
            let sq: f64 = phis.iter().map(|x| x * x).sum();
            lo = lo.min(sq);
            hi = hi.max(sq);
        }
        v.check(mask_err <= 1e-14, format!("n={dim} shell masks vs profile {mask_err:.1e}"));
        v.check(unity <= 1e-12, format!("n={dim} |Σφ−1| = {unity:.1e}"));
        v.check(lo >= 0.5 - 1e-12 && hi <= 1.0 + 1e-12, format!("n={dim} Σφ² in [{lo:.3}, {hi:.3}]"));
        let reports = suite(&format!("mode=partition_check\ngrid.n={dim}\ngrid.N=64\n"));
        v.report(&reports, "partition_unity");
    }
    v.finish();
}

#[test]
fn criterion_02_critical_scaling() {
    let mut v = Verdict::new(2, "critical scaling");
    for dim in [2, 3] {
        let n = dim as f64;
        let idx = format!("{},2,1;{},2,1;{},3,1", n / 2.0 - 1.0, n / 2.0, n / 3.0 - 1.0);
        let size = if dim == 2 { 64 } else { 32 };
        let reports = suite(&format!("mode=besov_suite\ngrid.n={dim}\ngrid.N={size}\nsamples=20\nindices={idx}\n"));
        let worst = reports.iter().filter(|r| r.estimate_id == "besov_scaling").map(|r| r.measured_constant).fold(0.0, f64::max);
        v.check(worst <= 0.01, format!("n={dim} worst relative scaling error {worst:.2e}"));
    }
    v.finish();
}

#[test]
fn criterion_03_bony_reconstruction() {
    let mut v = Verdict::new(3, "Bony reconstruction");
    let sp = space(2, 64);
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut conv: f64 = 0.0;
    for i in 0..50 {
        let u = random_field(&sp, 1, FieldSpectrum::full(1.0), &mut r);
        let w = random_field(&sp, 1, FieldSpectrum::full(1.0), &mut r);
        assert!(u.mean()[0].abs() < 1e-15 && w.mean()[0].abs() < 1e-15);
        worst = worst.max(reconstruction_defect(&u, &w).unwrap());
        if i < 3 {
            let exact = SpectralField::from_coefficients(&sp, 1, convolve(&u, &w)).unwrap();
            conv = conv.max(rel(&u.product(&w), &exact));
        }
    }
    v.check(conv <= 1e-12, format!("product vs convolution oracle {conv:.1e}"));
    v.check(worst <= 1e-10, format!("reconstruction defect {worst:.1e} over 50 pairs"));
    v.finish();
}

#[test]
fn criterion_04_commutator_gain() {
    let mut v = Verdict::new(4, "commutator gain");
    let reports = suite("mode=bony_suite\ngrid.n=2\ngrid.N=64\nsamples=20\nseed=4\n");
    let spread = reports.iter().find(|r| r.estimate_id == "block_commutator").unwrap().parameters["spread"].as_f64().unwrap();
    v.report(&reports, "block_commutator");
    v.check(spread <= 10.0, format!("shell spread {spread:.2}"));
    let margin = reports.iter().find(|r| r.estimate_id == "multiplier_commutator").unwrap().parameters["no_gain_margin"].as_f64().unwrap_or(0.0);
    v.report(&reports, "multiplier_commutator");
    v.check(margin >= 4.0, format!("Leray no-gain margin {margin:.1}x"));
    v.finish();
}

#[test]
fn criterion_05_elliptic_oracle() {
    let mut v = Verdict::new(5, "elliptic oracle");
    let (mut err, mut slack): (f64, f64) = (0.0, f64::INFINITY);
    let mut count = 0;
    for (dim, size, instances) in [(2, 16, 10), (3, 8, 10), (3, 16, 2)] {
        for seed in 0..instances {
            let sp = space(dim, size);
            let mut r = rng(500 + seed);
            let a = CoefficientField::random(&sp, 1.0, 0.1, FieldSpectrum::band(1.0, 4.0, 1.0), &mut r).unwrap();
            let f = random_field(&sp, dim, FieldSpectrum::band(1.0, 8.0, 1.0), &mut r);
            let sol = solve_pressure(&a, &f, 1e-12).unwrap();
            err = err.max(rel(&sol.grad_p, &dense_oracle(&a, &f)));
            let rhs = f.gradient_part().unwrap().l2_norm();
            let lhs = a.lower * sol.grad_p.l2_norm();
            slack = slack.min((rhs - lhs) / rhs);
            assert!(l2_bound_check(&a, &f, &sol).is_ok());
            count += 1;
        }
    }
    v.check(err <= 1e-8, format!("max relative L² error {err:.1e} over {count} solves"));
    v.check(slack >= -1e-8, format!("min L² slack {slack:.2e}"));
    v.finish();
}

#[test]
fn criterion_06_constant_stokes() {
    let mut v = Verdict::new(6, "constant Stokes exactness");
    let (abar, bbar) = (0.8, 1.3);
    for dim in [2, 3] {
        let sp = space(dim, 32);
        let k = [1i64, 2, 0];
        // divergence-free: u = (2, −1, 0) sin(k·x)
        let m = SpectralField::mode(&sp, k, 1.0, true).unwrap();
        let mut parts = vec![m.scale(2.0), m.scale(-1.0)];
        if dim == 3 {
            parts.push(SpectralField::zeros(&sp, 1));
        }
        let u0 = SpectralField::stack(&parts).unwrap();
        let dt = 0.01;
        let sol = constant_stokes_solve(&StokesData::free(u0.clone(), 100, dt).unwrap(), abar, bbar).unwrap();
        let k2 = 5.0 * sp.grid().base_frequency().powi(2);
        let worst = sol.u.fields.iter().enumerate().map(|(i, u)| rel(u, &u0.scale((-abar * bbar * k2 * i as f64 * dt).exp()))).fold(0.0, f64::max);
        v.check(worst <= 1e-10, format!("n={dim} mode decay over [0,1] {worst:.1e}"));
    }
    let reports = suite("mode=stokes_const\ngrid.n=2\ngrid.N=32\nstokes.T=1\nstokes.dt=0.01\n");
    v.report(&reports, "stokes_mode_decay");
    v.report(&reports, "stokes_constraint");
    let reports = suite("mode=stokes_const\ngrid.n=3\ngrid.N=16\nstokes.T=1\nstokes.dt=0.02\n");
    v.report(&reports, "stokes_constraint");
    v.finish();
}

#[test]
fn criterion_07_variable_stokes() {
    let mut v = Verdict::new(7, "variable-coefficient Stokes");
    let reports = suite("mode=stokes_var\ngrid.n=2\ngrid.N=64\nphysics.oscillation=0.3\nphysics.forcing=1\nstokes.T=0.25\nstokes.dt=0.005\n");
    v.report(&reports, "stokes_homotopy");
    v.report(&reports, "stokes_residual_order");
    v.report(&reports, "stokes_estimate");
    v.finish();
}

#[test]
fn criterion_08_lagrangian_identities() {
    let mut v = Verdict::new(8, "Lagrangian identities");
    let reports = suite("mode=lagrange_suite\ngrid.n=2\ngrid.N=64\nns.T=0.1\nns.dt=0.01\n");
    v.report(&reports, "lagrange_det");
    v.report(&reports, "lagrange_formulas");
    for a in 1..=6 {
        v.report(&reports, &format!("lagrange_A{a}"));
    }
    let sp = space(2, 32);
    let mut r = rng(8);
    let rho0 = CoefficientField::random(&sp, 1.0, 0.2, FieldSpectrum::band(1.0, 4.0, 1.0), &mut r).unwrap();
    let rho = DensityState::new(rho0, ViscosityLaw::default()).unwrap();
    let u0 = random_field(&sp, 2, FieldSpectrum::band(1.0, 6.0, 3.0), &mut r).leray().unwrap();
    let u0 = u0.scale(0.002 / u0.to_phys().lp_norm(f64::INFINITY));
    let cfg = NsConfig { dt: 0.005, horizon: 0.05, ..NsConfig::default() };
    let det = nonlinear_solve(&rho, &u0, &cfg).unwrap().det_defect();
    v.check(det <= 1e-6, format!("nonlinear-solve flow det defect {det:.1e}"));
    v.finish();
}

#[test]
fn criterion_09_nonlinear_contraction() {
    let mut v = Verdict::new(9, "nonlinear contraction");
    let reports = suite("mode=ns_local\ngrid.n=3\ngrid.N=64\nindices=0.5,2,1\nphysics.contrast=0.1\nphysics.amplitude=5e-4\nns.T=0.02\nns.dt=0.005\nns.alpha=0.01\n");
    v.report(&reports, "ns_small_data");
    v.report(&reports, "ns_contraction");
    v.report(&reports, "ns_estimate");
    v.report(&reports, "ns_det");
    v.finish();
}

#[test]
fn criterion_10_lagrangian_eulerian_equivalence() {
    let mut v = Verdict::new(10, "Lagrangian/Eulerian equivalence");
    let reports = suite("mode=ns_crosscheck\ngrid.n=2\ngrid.N=64\nphysics.contrast=0.2\nphysics.amplitude=0.002\nns.T=0.1\nns.dt=1e-3\n");
    let horizon = reports.iter().find(|r| r.estimate_id == "ns_crosscheck").map(|r| r.parameters["horizon"].as_f64().unwrap()).unwrap_or(0.0);
    v.check((horizon - 0.1).abs() < 1e-12, format!("horizon {horizon}"));
    v.report(&reports, "ns_crosscheck");
    v.finish();
}

#[test]
fn criterion_11_determinism() {
    let mut v = Verdict::new(11, "determinism");
    for mode in ["bony_suite\ngrid.N=32\nsamples=3", "ns_local\ngrid.N=16\nns.T=0.01\nns.dt=0.005", "stokes_var\ngrid.N=16\nstokes.T=0.02"] {
        let mut seen: Vec<Value> = Vec::new();
        for rep in 0..2 {
            let dir = std::env::temp_dir().join(format!("besovns-accept-{}-{rep}", std::process::id()));
            let _ = fs::remove_dir_all(&dir);
            let src = format!("mode={mode}\nseed=1234\noutput.dir={}\n", dir.display());
            run(&ExperimentConfig::parse(&src).unwrap(), &src, 1).unwrap();
            let mut d: Value = serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
            d["provenance"]["config"]["output_dir"] = Value::Null;
            seen.push(without_runtime(&d));
            let _ = fs::remove_dir_all(&dir);
        }
        let name = mode.lines().next().unwrap();
        v.check(seen[0] == seen[1], format!("{name} identical"));
    }
    v.finish();
}
