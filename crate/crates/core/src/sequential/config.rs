use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{RhoConstants, SpectralParams};

/// Linear interpolation of every error constant from its initial value to
/// `final_rho` over the first `tasks` transfer tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoDecay {
    pub final_rho: f64,
    pub tasks: usize,
}

/// Confidence term added to predicted task probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlackForm {
    /// `δk + ρ_T·k·sqrt(log(9kdm²/δ′)/h)`.
    #[default]
    Theorem,
    /// `δk + ρ_T·k`: the constant absorbs the log factor.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreElimination {
    pub eta: f64,
    pub rho_t: f64,
    /// Most probable models always kept.
    #[serde(default = "default_keep_top")]
    pub keep_top: usize,
    #[serde(default)]
    pub slack: SlackForm,
}

fn default_keep_top() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    /// Total number of tasks `m`, start-up included.
    pub num_tasks: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    /// Identification budget per task.
    pub budget: u64,
    pub rho: RhoConstants,
    #[serde(default)]
    pub rho_decay: Option<RhoDecay>,
    /// Tasks solved by uniform sampling before transfer is attempted.
    pub startup_tasks: usize,
    pub startup_per_pair: u64,
    pub post_per_pair: u64,
    /// Per-pair count of the uniform fallback; defaults to `startup_per_pair`.
    #[serde(default)]
    pub fallback_per_pair: Option<u64>,
    /// `None` disables pre-elimination (static transfer).
    #[serde(default)]
    pub pre_elimination: Option<PreElimination>,
    #[serde(default)]
    pub spectral: SpectralParams,
    /// Re-estimate after every start-up task rather than once at its end.
    #[serde(default)]
    pub refit_during_startup: bool,
    /// Also run identification with the exact models, for normalization.
    #[serde(default)]
    pub oracle_normalization: bool,
    /// Reject `δ > δ′/(3m²)` when pre-elimination is armed.
    #[serde(default)]
    pub strict_preconditions: bool,
}

impl SequentialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 || self.startup_per_pair == 0 || self.post_per_pair == 0 {
            return invalid("task and sample counts must be at least one");
        }
        if !(self.delta > 0.0 && self.delta < 1.0 && self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return invalid("δ and δ′ must lie in (0,1)");
        }
        if !(self.epsilon >= 0.0) {
            return invalid("ε must be non-negative");
        }
        if self.fallback_per_pair == Some(0) {
            return invalid("fallback needs at least one sample per pair");
        }
        if let Some(p) = &self.pre_elimination {
            if !(p.rho_t >= 0.0) || p.eta.is_nan() {
                return invalid("pre-elimination constants must be non-negative");
            }
            let m = self.num_tasks as f64;
            if self.strict_preconditions && self.delta > self.delta_prime / (3.0 * m * m) {
                return invalid("δ must not exceed δ′/(3m²) when pre-elimination is armed");
            }
        }
        Ok(())
    }

    /// Constants in force for the `t`-th transfer task (0-based).
    pub fn rho_at(&self, t: usize) -> RhoConstants {
        let Some(d) = self.rho_decay else { return self.rho };
        let frac = if d.tasks == 0 { 1.0 } else { (t as f64 / d.tasks as f64).min(1.0) };
        let lerp = |x: f64| x + (d.final_rho - x) * frac;
        let r = self.rho;
        RhoConstants {
            burn_in: lerp(r.burn_in),
            reward: lerp(r.reward),
            transition: lerp(r.transition),
            sigma_reward: lerp(r.sigma_reward),
            sigma_transition: lerp(r.sigma_transition),
        }
    }

    pub fn fallback_count(&self) -> u64 {
        self.fallback_per_pair.unwrap_or(self.startup_per_pair)
    }
}

#[cfg(test)]
pub(crate) fn test_config() -> SequentialConfig {
    SequentialConfig {
        num_tasks: 20,
        epsilon: 0.5,
        delta: 0.01,
        delta_prime: 0.1,
        budget: 5000,
        rho: RhoConstants::uniform(0.01),
        rho_decay: None,
        startup_tasks: 10,
        startup_per_pair: 50,
        post_per_pair: 30,
        fallback_per_pair: None,
        pre_elimination: None,
        spectral: SpectralParams::default(),
        refit_during_startup: false,
        oracle_normalization: false,
        strict_preconditions: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_schedule() {
        let mut cfg = test_config();
        cfg.rho = RhoConstants::uniform(0.135);
        assert_eq!(cfg.rho_at(50), cfg.rho);
        cfg.rho_decay = Some(RhoDecay { final_rho: 0.006, tasks: 100 });
        assert!((cfg.rho_at(0).reward - 0.135).abs() < 1e-15);
        assert!((cfg.rho_at(50).reward - 0.0705).abs() < 1e-12);
        assert!((cfg.rho_at(100).reward - 0.006).abs() < 1e-15);
        assert!((cfg.rho_at(400).transition - 0.006).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut cfg = test_config();
        assert!(cfg.validate().is_ok());
        cfg.pre_elimination = Some(PreElimination { eta: 0.087, rho_t: 0.001, keep_top: 3, slack: SlackForm::Theorem });
        assert!(cfg.validate().is_ok());
        cfg.strict_preconditions = true;
        assert!(cfg.validate().is_err());
        cfg.delta = 0.1 / (3.0 * 400.0);
        assert!(cfg.validate().is_ok());
        cfg.post_per_pair = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let cfg: SequentialConfig = serde_json::from_str(
            r#"{"num_tasks":5,"epsilon":0.5,"delta":0.01,"delta_prime":0.1,"budget":100,
                "rho":{"burn_in":0.01,"reward":0.01,"transition":0.01,"sigma_reward":0.01,"sigma_transition":0.01},
                "startup_tasks":3,"startup_per_pair":50,"post_per_pair":30,
                "pre_elimination":{"eta":0.087,"rho_t":0.001}}"#,
        )
        .unwrap();
        assert_eq!(cfg.pre_elimination.unwrap().keep_top, 3);
        assert_eq!(cfg.fallback_count(), 50);
        assert!(!cfg.refit_during_startup);
    }
}
