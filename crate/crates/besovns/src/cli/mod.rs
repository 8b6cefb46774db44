//! Configuration-driven experiment runner.
//!
//! A run writes a bundle directory:
//!
//! - `config.snapshot`: the configuration text, verbatim, before any compute;
//! - `traces.csv`: time traces of the solver norms, when the mode has any;
//! - `diagnostics.json`: every estimate report, the pass flag and runtime;
//! - `snapshots/*.bnsf`: field snapshots at the configured times.
//!
//! A sweep runs the suite once per value of one configuration key and adds
//! `sweep.csv` with one row per `(value, estimate_id)`.

pub mod config;
pub mod suites;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde_json::{json, Value};

pub use config::{ExperimentConfig, Mode};
use crate::besov::write_traces_csv;
use crate::error::{Error, Result};
use crate::report::{finite_or_null, EstimateReport};
use crate::spectral::write_snapshot;
use suites::{run_suite, SuiteOutput};

/// Outcome of one run or sweep: `0` all pass, `1` some estimate failed or a
/// solver error, `2` invalid configuration.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub failing: Vec<String>,
    pub diagnostics: Value,
}

fn write_bundle(dir: &Path, out: &SuiteOutput) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("traces.csv"))?);
    write_traces_csv(&mut w, &out.traces)?;
    if !out.snapshots.is_empty() {
        let sd = dir.join("snapshots");
        fs::create_dir_all(&sd)?;
        for (name, snap) in &out.snapshots {
            let mut w = BufWriter::new(fs::File::create(sd.join(format!("{name}.bnsf")))?);
            write_snapshot(&mut w, snap)?;
        }
    }
    Ok(())
}

fn report_json(r: &EstimateReport) -> Value {
    json!({
        "estimate_id": r.estimate_id,
        "parameters": r.parameters,
        "measured_constant": finite_or_null(r.measured_constant),
        "grid": r.grid,
        "seed": r.seed,
        "pass": r.pass,
    })
}

/// Runs the configured suite once and writes its bundle into `dir`.
fn run_once(cfg: &ExperimentConfig, dir: &Path) -> (Vec<EstimateReport>, Option<String>) {
    match run_suite(cfg).and_then(|out| {
        write_bundle(dir, &out)?;
        Ok(out)
    }) {
        Ok(out) => (out.reports, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    }
}

fn diagnostics(cfg: &ExperimentConfig, reports: &[EstimateReport], error: Option<&str>, runtime: f64) -> (Value, Vec<String>) {
    let mut failing: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.estimate_id.clone()).collect();
    failing.dedup();
    let pass = error.is_none() && failing.is_empty();
    let v = json!({
        "mode": cfg.mode,
        "seed": cfg.seed,
        "grid": cfg.grid().ok(),
        "pass": pass,
        "failing": failing,
        "error": error,
        "reports": reports.iter().map(report_json).collect::<Vec<_>>(),
        "provenance": {"config": cfg},
        "runtime_seconds": runtime,
    });
    (v, failing)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// Runs `cfg` (or its sweep) with bundle output in `cfg.output_dir`;
/// `source` is the configuration text copied verbatim into the bundle.
pub fn run(cfg: &ExperimentConfig, source: &str, jobs: usize) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.snapshot"), source)?;
    if let Some(sw) = &cfg.sweep {
        return sweep(cfg, &sw.key, &sw.values, jobs);
    }
    let t0 = Instant::now();
    let (reports, error) = run_once(cfg, &dir);
    let (diag, failing) = diagnostics(cfg, &reports, error.as_deref(), t0.elapsed().as_secs_f64());
    write_json(&dir.join("diagnostics.json"), &diag)?;
    let code = if diag["pass"] == true { 0 } else { 1 };
    Ok(RunOutcome { exit_code: code, failing: if let Some(e) = error { vec![e] } else { failing }, diagnostics: diag })
}

/// Runs the suite once per value of `key` on up to `jobs` worker threads and
/// aggregates the measured constants into `sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[String], jobs: usize) -> Result<RunOutcome> {
    if values.is_empty() {
        return Err(Error::Config { location: "field `sweep.values`".into(), message: "empty value list".into() });
    }
    let dir = PathBuf::from(&cfg.output_dir);
    let mut runs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut c = cfg.clone();
        c.sweep = None;
        c.set(key, v).map_err(|message| Error::Config { location: format!("sweep value {}, field `{key}`", i + 1), message })?;
        c.validate()?;
        c.output_dir = dir.join(format!("run_{i:03}")).to_string_lossy().into_owned();
        runs.push(c);
    }
    let t0 = Instant::now();
    let results: Mutex<Vec<Option<(Vec<EstimateReport>, Option<String>)>>> = Mutex::new(vec![None; runs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= runs.len() {
                    break;
                }
                let d = PathBuf::from(&runs[i].output_dir);
                let r = match fs::create_dir_all(&d) {
                    Ok(()) => run_once(&runs[i], &d),
                    Err(e) => (Vec::new(), Some(e.to_string())),
                };
                results.lock().expect("sweep results lock")[i] = Some(r);
            });
        }
    });
    let results: Vec<(Vec<EstimateReport>, Option<String>)> = results.into_inner().expect("sweep results lock").into_iter().map(|r| r.expect("every sweep run finished")).collect();
    let mut csv = String::from("key,value,estimate_id,measured_constant,pass\n");
    let mut entries = Vec::new();
    let mut failing = Vec::new();
    for ((v, c), (reports, err)) in values.iter().zip(&runs).zip(&results) {
        for r in reports {
            csv.push_str(&format!("{key},{v},{},{:.16e},{}\n", r.estimate_id, r.measured_constant, r.pass));
            if !r.pass {
                failing.push(format!("{key}={v}:{}", r.estimate_id));
            }
        }
        if let Some(e) = err {
            failing.push(format!("{key}={v}:{e}"));
        }
        let (d, _) = diagnostics(c, reports, err.as_deref(), 0.0);
        entries.push(json!({"value": v, "pass": d["pass"], "error": d["error"], "reports": d["reports"]}));
    }
    fs::write(dir.join("sweep.csv"), csv)?;
    let pass = failing.is_empty();
    let diag = json!({
        "mode": cfg.mode,
        "seed": cfg.seed,
        "grid": cfg.grid().ok(),
        "pass": pass,
        "failing": failing,
        "sweep": {"key": key, "values": values, "runs": entries},
        "provenance": {"config": cfg},
        "runtime_seconds": t0.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("diagnostics.json"), &diag)?;
    Ok(RunOutcome { exit_code: if pass { 0 } else { 1 }, failing, diagnostics: diag })
}

/// `diagnostics.json` content with the runtime removed, for determinism
/// comparisons.
pub fn without_runtime(v: &Value) -> Value {
    let mut v = v.clone();
    if let Some(m) = v.as_object_mut() {
        m.remove("runtime_seconds");
    }
    v
}
