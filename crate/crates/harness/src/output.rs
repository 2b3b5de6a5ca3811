use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, AggregateResult};
use crate::HarnessError;

/// Every metric name a summary may carry.
pub const METRICS: &[&str] = &[
    "tau",
    "total_queries",
    "eps_optimal",
    "true_survived",
    "shortfall",
    "informative_fraction",
    "uniform_queries",
    "theta_eps_size",
    "bound",
    "gap",
    "o_col_err_max",
    "t_err_max",
    "failed",
    "mean_transfer_queries",
    "eps_optimal_fraction",
    "always_covered",
    "normalized_complexity",
];

/// CSV text: header row, comma separated, LF line endings, shortest
/// round-trip formatting of reals.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Runtime(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv: {e}")))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    write_file(path, &csv_bytes(rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
    pub half_width: f64,
    pub n: usize,
}

impl From<AggregateResult> for MetricSummary {
    fn from(a: AggregateResult) -> Self {
        MetricSummary { mean: a.mean, sd: a.sd, half_width: a.half_width, n: a.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: String,
    pub scenario: String,
    pub num_runs: usize,
    pub level: f64,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl Summary {
    pub fn new(command: &str, scenario: &str, num_runs: usize, level: f64) -> Self {
        Summary { command: command.into(), scenario: scenario.into(), num_runs, level, metrics: BTreeMap::new() }
    }

    /// Aggregates the finite entries of `values` under `name`; skipped
    /// when none are finite.
    pub fn add(&mut self, name: &str, values: impl IntoIterator<Item = f64>) -> Result<(), HarnessError> {
        if !METRICS.contains(&name) {
            return Err(HarnessError::Runtime(format!("undocumented metric {name}")));
        }
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if !v.is_empty() {
            self.metrics.insert(name.to_string(), aggregate(&v, self.level)?.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for (name, m) in &self.metrics {
            if !METRICS.contains(&name.as_str()) {
                return Err(HarnessError::Runtime(format!("undocumented metric {name}")));
            }
            if !(m.half_width >= 0.0) || m.n == 0 {
                return Err(HarnessError::Runtime(format!("metric {name} is malformed")));
            }
        }
        Ok(())
    }

    /// JSON text; infinite half-widths are written as `null`.
    pub fn to_json(&self) -> Result<String, HarnessError> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Runtime(e.to_string()))
    }
}
