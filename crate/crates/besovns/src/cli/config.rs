//! Experiment configuration: flat `key=value` text with dotted keys, or a
//! JSON mirror (nested objects or dotted keys).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::elliptic::Regime;
use crate::error::{Error, Result};
use crate::ns_solver::ViscosityLaw;
use crate::spectral::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PartitionCheck,
    BesovSuite,
    BonySuite,
    Elliptic,
    StokesConst,
    StokesVar,
    LagrangeSuite,
    NsLocal,
    NsCrosscheck,
}

impl Mode {
    pub const ALL: [Mode; 9] = [
        Mode::PartitionCheck,
        Mode::BesovSuite,
        Mode::BonySuite,
        Mode::Elliptic,
        Mode::StokesConst,
        Mode::StokesVar,
        Mode::LagrangeSuite,
        Mode::NsLocal,
        Mode::NsCrosscheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::PartitionCheck => "partition_check",
            Mode::BesovSuite => "besov_suite",
            Mode::BonySuite => "bony_suite",
            Mode::Elliptic => "elliptic",
            Mode::StokesConst => "stokes_const",
            Mode::StokesVar => "stokes_var",
            Mode::LagrangeSuite => "lagrange_suite",
            Mode::NsLocal => "ns_local",
            Mode::NsCrosscheck => "ns_crosscheck",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown mode `{s}`; expected one of {}", Mode::ALL.map(|m| m.name()).join(", ")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BesovTriple {
    pub s: f64,
    pub p: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridConfig {
    pub n: usize,
    pub size: usize,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicsConfig {
    pub a_bar: f64,
    pub b_bar: f64,
    pub rho_bar: f64,
    /// Relative oscillation `max|a − ā|/ā` of random coefficients.
    pub oscillation: f64,
    /// Relative density contrast `max|ρ₀ − ρ̄|/ρ̄`.
    pub contrast: f64,
    pub mu_law: String,
    pub mu0: f64,
    pub mu_slope: f64,
    /// Sup norm of the random initial velocity.
    pub amplitude: f64,
    /// Sup norm of the random forcing.
    pub forcing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub elliptic_tol: f64,
    pub regime: Regime,
    pub q: f64,
    pub stokes_dt: f64,
    pub stokes_t: f64,
    pub stokes_tol: f64,
    pub homotopy_eps0: f64,
    pub splitting_threshold: f64,
    pub max_picard: usize,
    pub split_m: Option<i32>,
    pub ns_dt: f64,
    pub ns_t: f64,
    pub ns_tol: f64,
    pub alpha: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub grid: GridConfig,
    pub indices: Vec<BesovTriple>,
    pub physics: PhysicsConfig,
    pub solver: SolverConfig,
    pub samples: usize,
    pub seed: u64,
    pub output_dir: String,
    pub snapshot_times: Vec<f64>,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::PartitionCheck,
            grid: GridConfig { n: 2, size: 32, length: 2.0 * std::f64::consts::PI },
            indices: Vec::new(),
            physics: PhysicsConfig {
                a_bar: 1.0,
                b_bar: 1.0,
                rho_bar: 1.0,
                oscillation: 0.1,
                contrast: 0.2,
                mu_law: "linear".into(),
                mu0: 1.0,
                mu_slope: 0.1,
                amplitude: 0.002,
                forcing: 0.0,
            },
            solver: SolverConfig {
                elliptic_tol: 1e-10,
                regime: Regime::HighP,
                q: 1.0,
                stokes_dt: 0.01,
                stokes_t: 0.1,
                stokes_tol: 1e-9,
                homotopy_eps0: 0.25,
                splitting_threshold: 0.1,
                max_picard: 200,
                split_m: None,
                ns_dt: 1e-3,
                ns_t: 0.1,
                ns_tol: 1e-10,
                alpha: 0.01,
                radius: 0.01,
            },
            samples: 5,
            seed: 0,
            output_dir: "out".into(),
            snapshot_times: Vec::new(),
            sweep: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "mode",
    "grid.n",
    "grid.N",
    "grid.L",
    "indices",
    "physics.a_bar",
    "physics.b_bar",
    "physics.rho_bar",
    "physics.oscillation",
    "physics.contrast",
    "physics.mu_law",
    "physics.mu0",
    "physics.mu_slope",
    "physics.amplitude",
    "physics.forcing",
    "elliptic.tol",
    "elliptic.regime",
    "elliptic.q",
    "stokes.dt",
    "stokes.T",
    "stokes.tol",
    "stokes.homotopy_eps0",
    "stokes.splitting_threshold",
    "stokes.max_picard",
    "stokes.split_m",
    "ns.dt",
    "ns.T",
    "ns.tol",
    "ns.alpha",
    "ns.radius",
    "samples",
    "seed",
    "output.dir",
    "output.snapshot_times",
    "sweep.key",
    "sweep.values",
];

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl ExperimentConfig {
    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "mode" => self.mode = v.parse()?,
            "grid.n" => self.grid.n = num(v)?,
            "grid.N" => self.grid.size = num(v)?,
            "grid.L" => self.grid.length = num(v)?,
            "indices" => {
                self.indices = v
                    .split(';')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| {
                        let xs: Vec<f64> = list(t).iter().map(|x| num(x)).collect::<std::result::Result<_, _>>()?;
                        match xs.as_slice() {
                            [s, p, r] => Ok(BesovTriple { s: *s, p: *p, r: *r }),
                            _ => Err(format!("index `{t}` must be `s,p,r`")),
                        }
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "physics.a_bar" => self.physics.a_bar = num(v)?,
            "physics.b_bar" => self.physics.b_bar = num(v)?,
            "physics.rho_bar" => self.physics.rho_bar = num(v)?,
            "physics.oscillation" => self.physics.oscillation = num(v)?,
            "physics.contrast" => self.physics.contrast = num(v)?,
            "physics.mu_law" => self.physics.mu_law = v.to_string(),
            "physics.mu0" => self.physics.mu0 = num(v)?,
            "physics.mu_slope" => self.physics.mu_slope = num(v)?,
            "physics.amplitude" => self.physics.amplitude = num(v)?,
            "physics.forcing" => self.physics.forcing = num(v)?,
            "elliptic.tol" => self.solver.elliptic_tol = num(v)?,
            "elliptic.regime" => {
                self.solver.regime = match v {
                    "low_p" => Regime::LowP,
                    "high_p" => Regime::HighP,
                    _ => return Err(format!("unknown regime `{v}`; expected low_p or high_p")),
                }
            }
            "elliptic.q" => self.solver.q = num(v)?,
            "stokes.dt" => self.solver.stokes_dt = num(v)?,
            "stokes.T" => self.solver.stokes_t = num(v)?,
            "stokes.tol" => self.solver.stokes_tol = num(v)?,
            "stokes.homotopy_eps0" => self.solver.homotopy_eps0 = num(v)?,
            "stokes.splitting_threshold" => self.solver.splitting_threshold = num(v)?,
            "stokes.max_picard" => self.solver.max_picard = num(v)?,
            "stokes.split_m" => self.solver.split_m = if v == "auto" { None } else { Some(num(v)?) },
            "ns.dt" => self.solver.ns_dt = num(v)?,
            "ns.T" => self.solver.ns_t = num(v)?,
            "ns.tol" => self.solver.ns_tol = num(v)?,
            "ns.alpha" => self.solver.alpha = num(v)?,
            "ns.radius" => self.solver.radius = num(v)?,
            "samples" => self.samples = num(v)?,
            "seed" => self.seed = num(v)?,
            "output.dir" => self.output_dir = v.to_string(),
            "output.snapshot_times" => self.snapshot_times = list(v).iter().map(|x| num(x)).collect::<std::result::Result<_, _>>()?,
            "sweep.key" => self.sweep.get_or_insert_with(|| SweepConfig { key: String::new(), values: Vec::new() }).key = v.to_string(),
            "sweep.values" => self.sweep.get_or_insert_with(|| SweepConfig { key: String::new(), values: Vec::new() }).values = list(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses flat `key=value` text; `#` starts a comment.
    pub fn parse_flat(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("line {}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { location: loc.clone(), message: format!("expected `key=value`, found `{line}`") })?;
            let k = k.trim();
            if let Some(prev) = seen.insert(k.to_string(), i + 1) {
                return Err(Error::Config { location: loc, message: format!("duplicate key `{k}` (first on line {prev})") });
            }
            cfg.set(k, v).map_err(|message| Error::Config { location: format!("{loc}, field `{k}`"), message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the JSON mirror: nested objects are flattened to dotted keys.
    pub fn parse_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::Config { location: format!("line {}", e.line()), message: e.to_string() })?;
        let mut flat = Vec::new();
        flatten("", &root, &mut flat)?;
        let mut cfg = Self::default();
        for (k, v) in flat {
            cfg.set(&k, &v).map_err(|message| Error::Config { location: format!("field `{k}`"), message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// JSON when the text starts with `{`, flat otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_flat(text)
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.size, self.grid.length)
    }

    pub fn viscosity_law(&self) -> ViscosityLaw {
        match self.physics.mu_law.as_str() {
            "constant" => ViscosityLaw::Constant { mu0: self.physics.mu0 },
            _ => ViscosityLaw::Linear { mu0: self.physics.mu0, slope: self.physics.mu_slope },
        }
    }

    /// Integrability exponent of the first configured index, `2` otherwise.
    pub fn p(&self) -> f64 {
        self.indices.first().map(|t| t.p).unwrap_or(2.0)
    }

    /// Numeric gates, checked before any dispatch.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Config { location: format!("field `{field}`"), message });
        if !(self.grid.n == 2 || self.grid.n == 3) {
            return bad("grid.n", format!("dimension must be 2 or 3, got {}", self.grid.n));
        }
        if self.grid.size < 8 || !self.grid.size.is_power_of_two() {
            return bad("grid.N", format!("grid size must be a power of two ≥ 8, got {}", self.grid.size));
        }
        if !(self.grid.length > 0.0 && self.grid.length.is_finite()) {
            return bad("grid.L", format!("box length must be positive, got {}", self.grid.length));
        }
        for t in &self.indices {
            if !(t.p >= 1.0 && t.r >= 1.0) || !t.s.is_finite() {
                return bad("indices", format!("({}, {}, {}) needs p, r ≥ 1", t.s, t.p, t.r));
            }
        }
        for (f, v) in [("physics.a_bar", self.physics.a_bar), ("physics.b_bar", self.physics.b_bar), ("physics.rho_bar", self.physics.rho_bar), ("physics.mu0", self.physics.mu0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(f, format!("must be positive, got {v}"));
            }
        }
        for (f, v) in [("physics.oscillation", self.physics.oscillation), ("physics.contrast", self.physics.contrast)] {
            if !(0.0..1.0).contains(&v) {
                return bad(f, format!("must lie in [0, 1), got {v}"));
            }
        }
        if !matches!(self.physics.mu_law.as_str(), "constant" | "linear") {
            return bad("physics.mu_law", format!("unknown law `{}`; expected constant or linear", self.physics.mu_law));
        }
        let c = self.physics.contrast * self.physics.rho_bar;
        if self.physics.mu_law == "linear" && self.physics.mu_slope.abs() * c >= 1.0 {
            return bad("physics.mu_slope", "viscosity is not positive on the density range".into());
        }
        for (f, v) in [("stokes.dt", self.solver.stokes_dt), ("stokes.T", self.solver.stokes_t), ("ns.dt", self.solver.ns_dt), ("ns.T", self.solver.ns_t), ("stokes.tol", self.solver.stokes_tol), ("ns.tol", self.solver.ns_tol), ("elliptic.tol", self.solver.elliptic_tol), ("ns.alpha", self.solver.alpha), ("ns.radius", self.solver.radius), ("stokes.homotopy_eps0", self.solver.homotopy_eps0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(f, format!("must be positive, got {v}"));
            }
        }
        if self.solver.stokes_dt > self.solver.stokes_t || self.solver.ns_dt > self.solver.ns_t {
            return bad("stokes.dt", "time step exceeds the horizon".into());
        }
        if self.samples == 0 {
            return bad("samples", "need at least one sample".into());
        }
        if let Some(s) = &self.sweep {
            if !KEYS.contains(&s.key.as_str()) || s.key.starts_with("sweep.") {
                return bad("sweep.key", format!("`{}` is not a sweepable key", s.key));
            }
            if s.values.is_empty() {
                return bad("sweep.values", "empty value list".into());
            }
        }
        Ok(())
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) -> Result<()> {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out)?;
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Array(xs) => {
            let parts: Vec<String> = xs
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    Value::Array(ys) => ys.iter().map(|y| y.to_string()).collect::<Vec<_>>().join(","),
                    other => other.to_string(),
                })
                .collect();
            let sep = if xs.iter().any(|x| x.is_array()) { ";" } else { "," };
            out.push((prefix.to_string(), parts.join(sep)));
        }
        Value::Null => {}
    }
    Ok(())
}
