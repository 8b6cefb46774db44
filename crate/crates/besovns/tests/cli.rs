use std::fs;
use std::path::PathBuf;
use std::process::Command;

use besovns::cli::{run, without_runtime, ExperimentConfig, Mode};
use besovns::Error;
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("besovns-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_besovns"))
}

#[test]
fn flat_and_json_configs_agree() {
    let flat = "# grid\nmode=stokes_var\ngrid.N=16\ngrid.n=3\nindices=0.5,2,1;1,3,1\nstokes.dt=1e-3\nstokes.split_m=2\nphysics.mu_law=constant\n";
    let json = r#"{"mode":"stokes_var","grid":{"N":16,"n":3},"indices":[[0.5,2,1],[1,3,1]],"stokes.dt":1e-3,"stokes":{"split_m":2},"physics":{"mu_law":"constant"}}"#;
    let a = ExperimentConfig::parse(flat).unwrap();
    let b = ExperimentConfig::parse(json).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mode, Mode::StokesVar);
    assert_eq!(a.indices.len(), 2);
    assert_eq!(a.solver.split_m, Some(2));
}

#[test]
fn config_errors_name_line_and_field() {
    let e = ExperimentConfig::parse("grid.N=32\nstokes.dt=abc\n").unwrap_err();
    match e {
        Error::Config { location, .. } => assert_eq!(location, "line 2, field `stokes.dt`"),
        other => panic!("{other}"),
    }
    let e = ExperimentConfig::parse("grid.N=32\n\nbogus.key=1\n").unwrap_err();
    assert!(e.to_string().contains("line 3") && e.to_string().contains("bogus.key"), "{e}");
    let e = ExperimentConfig::parse("grid.N=32\ngrid.N=64\n").unwrap_err();
    assert!(e.to_string().contains("duplicate"), "{e}");
    let e = ExperimentConfig::parse("physics.contrast=1.5\n").unwrap_err();
    assert!(e.to_string().contains("physics.contrast"), "{e}");
}

#[test]
fn partition_bundle_is_written() {
    let dir = scratch("bundle");
    let src = format!("mode=partition_check\ngrid.N=64\noutput.dir={}\n", dir.display());
    let cfg = ExperimentConfig::parse(&src).unwrap();
    let out = run(&cfg, &src, 1).unwrap();
    assert_eq!(out.exit_code, 0);
    assert_eq!(fs::read_to_string(dir.join("config.snapshot")).unwrap(), src);
    let diag: Value = serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["pass"], true);
    let unity = diag["reports"].as_array().unwrap().iter().find(|r| r["estimate_id"] == "partition_unity").unwrap();
    assert!(unity["measured_constant"].as_f64().unwrap() <= 1e-12);
    assert!(dir.join("traces.csv").exists());
}

#[test]
fn constant_coefficient_elliptic_is_one_iteration() {
    let dir = scratch("elliptic");
    let src = format!("mode=elliptic\ngrid.N=16\nphysics.oscillation=0\nsamples=2\noutput.dir={}\n", dir.display());
    let cfg = ExperimentConfig::parse(&src).unwrap();
    let out = run(&cfg, &src, 1).unwrap();
    let it = out.diagnostics["reports"].as_array().unwrap().iter().find(|r| r["estimate_id"] == "elliptic_iterations").unwrap().clone();
    assert_eq!(it["measured_constant"].as_f64().unwrap(), 1.0);
}

#[test]
fn sweep_aggregates_one_row_per_value_and_estimate() {
    let dir = scratch("sweep");
    let src = format!("mode=elliptic\ngrid.N=16\nsamples=1\nsweep.key=physics.oscillation\nsweep.values=0.1,0.3,0.6\noutput.dir={}\n", dir.display());
    let cfg = ExperimentConfig::parse(&src).unwrap();
    let out = run(&cfg, &src, 2).unwrap();
    assert_eq!(out.exit_code, 0);
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| l.contains("elliptic_contraction")).collect();
    assert_eq!(rows.len(), 3);
    let c: Vec<f64> = rows.iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
}

#[test]
fn splitting_sweep_over_cutoff() {
    let dir = scratch("split");
    let src = format!("mode=stokes_var\ngrid.N=16\nstokes.T=0.02\nsweep.key=stokes.split_m\nsweep.values=0,1,2\noutput.dir={}\n", dir.display());
    let cfg = ExperimentConfig::parse(&src).unwrap();
    run(&cfg, &src, 3).unwrap();
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let t1: Vec<f64> = csv.lines().filter(|l| l.contains("stokes_splitting")).map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(t1.len(), 3);
    assert!(t1[0] >= t1[1] && t1[1] >= t1[2], "{t1:?}");
}

#[test]
fn binary_exit_codes() {
    let dir = scratch("bin");
    let ok = bin().args(["--mode", "partition_check", "--output"]).arg(&dir).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "mode=elliptic\nsweep.key=physics.oscillation\nsweep.values=\n").unwrap();
    let empty = bin().arg("--config").arg(&cfg).arg("--output").arg(dir.join("e")).output().unwrap();
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("sweep.values"));
    let bad_mode = bin().args(["--mode", "nope"]).status().unwrap();
    assert_eq!(bad_mode.code(), Some(2));
    // large data: no admissible horizon
    fs::write(&cfg, "mode=ns_local\ngrid.N=16\nphysics.amplitude=5\nns.T=0.002\n").unwrap();
    let fail = bin().arg("--config").arg(&cfg).arg("--output").arg(dir.join("f")).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
}

#[test]
fn identical_seed_gives_identical_diagnostics() {
    let mut seen = Vec::new();
    for (i, jobs) in [1, 3].iter().enumerate() {
        let dir = scratch(&format!("det{i}"));
        let src = format!("mode=bony_suite\ngrid.N=32\nsamples=3\nseed=42\nsweep.key=samples\nsweep.values=1,2,3\noutput.dir={}\n", dir.display());
        let cfg = ExperimentConfig::parse(&src).unwrap();
        run(&cfg, &src, *jobs).unwrap();
        let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
        v["provenance"]["config"]["output_dir"] = Value::Null;
        seen.push(without_runtime(&v));
    }
    assert_eq!(seen[0], seen[1]);
}
