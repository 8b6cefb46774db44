//! Serializable estimate-check reports shared by every diagnostic suite.

use serde::Serialize;
use serde_json::Value;

use crate::spectral::Grid;

/// `{estimate_id, parameters, measured_constant, grid, seed}` plus a pass
/// flag for suites that gate on the constant.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub estimate_id: String,
    pub parameters: Value,
    pub measured_constant: f64,
    pub grid: Grid,
    pub seed: Option<u64>,
    pub pass: bool,
}

impl EstimateReport {
    pub fn new(estimate_id: impl Into<String>, parameters: Value, measured_constant: f64, grid: Grid) -> Self {
        Self { estimate_id: estimate_id.into(), parameters, measured_constant, grid, seed: None, pass: measured_constant.is_finite() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

/// JSON-safe number: non-finite values become `null` when serialized.
pub fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::Null
    }
}
