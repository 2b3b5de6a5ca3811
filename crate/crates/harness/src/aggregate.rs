use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::HarnessError;

/// Degrees of freedom beyond which the normal quantile replaces Student's t.
pub const T_TABLE_MAX_DF: usize = 200;

pub const DEFAULT_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    pub mean: f64,
    pub sd: f64,
    pub half_width: f64,
    pub level: f64,
    pub n: usize,
}

impl AggregateResult {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Two-sided quantile `t_{(1+level)/2, df}`.
pub fn t_quantile(level: f64, df: usize) -> f64 {
    let p = 0.5 + level / 2.0;
    if df > T_TABLE_MAX_DF {
        Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
    } else {
        StudentsT::new(0.0, 1.0, df as f64).unwrap().inverse_cdf(p)
    }
}

pub fn aggregate(values: &[f64], level: f64) -> Result<AggregateResult, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Runtime("cannot aggregate an empty list".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HarnessError::Config(format!("confidence level {level} outside (0,1)")));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(AggregateResult { mean, sd: 0.0, half_width: f64::INFINITY, level, n });
    }
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let half_width = if sd == 0.0 { 0.0 } else { t_quantile(level, n - 1) * sd / (n as f64).sqrt() };
    Ok(AggregateResult { mean, sd, half_width, level, n })
}
