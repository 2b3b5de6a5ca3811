//! JSON experiment configuration. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use seqtransfer::envs::{GoalMode, ObjectworldSpec, TwoRoomsLayout};
use seqtransfer::sequential::SequentialConfig;
use seqtransfer::spectral::SpectralParams;

use crate::aggregate::DEFAULT_LEVEL;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Environment {
    TwoRooms {
        width: usize,
        height: usize,
        num_tasks: usize,
        #[serde(default = "default_layout")]
        layout: TwoRoomsLayout,
        #[serde(default = "default_failure")]
        failure_prob: f64,
        gamma: f64,
        /// Fixed hidden task; round-robin over runs when absent.
        #[serde(default)]
        hidden: Option<usize>,
    },
    MultiGoal {
        width: usize,
        height: usize,
        #[serde(default = "default_true_best")]
        true_best: f64,
        #[serde(default = "default_other_best")]
        other_best: f64,
        #[serde(default = "default_failure")]
        failure_prob: f64,
        gamma: f64,
        #[serde(default)]
        goal_mode: GoalMode,
        #[serde(default)]
        hidden: Option<usize>,
    },
    Objectworld {
        #[serde(default)]
        spec: ObjectworldSpec,
        num_tasks: usize,
        chain: ChainSpec,
        /// Seed of the task family, shared by every run.
        #[serde(default)]
        family_seed: u64,
        #[serde(default)]
        hidden: Option<usize>,
    },
    SyntheticHmm {
        k: usize,
        blocks: Vec<usize>,
        #[serde(default)]
        draws_per_block: Option<usize>,
        /// Triple counts `m` swept by `learn-hmm`.
        triples: Vec<usize>,
        /// Seed of the HMM itself, shared by every run.
        #[serde(default)]
        model_seed: u64,
        #[serde(default)]
        spectral: SpectralParams,
    },
}

fn default_layout() -> TwoRoomsLayout {
    TwoRoomsLayout::GoalsAndDoors
}

fn default_failure() -> f64 {
    0.1
}

fn default_true_best() -> f64 {
    0.8
}

fn default_other_best() -> f64 {
    0.81
}

/// Sparse successor chain over tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub next: f64,
    pub skip: f64,
    pub stay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtumSection {
    pub epsilon: f64,
    pub delta: f64,
    /// Query budget `n`.
    pub budget: u64,
    /// Uniform error bound on the candidate models (0 for exact models).
    #[serde(default)]
    pub model_error: f64,
    #[serde(default)]
    pub fallback_per_pair: Option<u64>,
    #[serde(default)]
    pub fallback_cap: Option<u64>,
    #[serde(default)]
    pub record_queries: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("results"), prefix: "run".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: Environment,
    #[serde(default)]
    pub ptum: Option<PtumSection>,
    #[serde(default)]
    pub sequential: Option<SequentialConfig>,
    pub num_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Confidence level of the reported intervals.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.num_runs == 0 {
            return bad("num_runs must be at least 1");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0,1)");
        }
        let gamma_ok = |g: f64| g >= 0.0 && g < 1.0;
        match &self.environment {
            Environment::TwoRooms { num_tasks, failure_prob, gamma, hidden, .. } => {
                if !gamma_ok(*gamma) || !(0.0..=1.0).contains(failure_prob) {
                    return bad("two-rooms: gamma must be in [0,1) and failure_prob in [0,1]");
                }
                if hidden.is_some_and(|h| h >= *num_tasks) {
                    return bad("two-rooms: hidden task out of range");
                }
            }
            Environment::MultiGoal { failure_prob, gamma, hidden, .. } => {
                if !gamma_ok(*gamma) || !(0.0..=1.0).contains(failure_prob) {
                    return bad("multi-goal: gamma must be in [0,1) and failure_prob in [0,1]");
                }
                if hidden.is_some_and(|h| h >= 7) {
                    return bad("multi-goal: hidden task out of range");
                }
            }
            Environment::Objectworld { num_tasks, hidden, .. } => {
                if hidden.is_some_and(|h| h >= *num_tasks) {
                    return bad("objectworld: hidden task out of range");
                }
            }
            Environment::SyntheticHmm { k, blocks, triples, .. } => {
                if *k < 2 || blocks.is_empty() || triples.is_empty() || triples.contains(&0) {
                    return bad("synthetic-hmm: k >= 2, non-empty blocks and positive triple counts required");
                }
            }
        }
        if let Some(p) = &self.ptum {
            if !(p.epsilon >= 0.0) || !(p.delta > 0.0 && p.delta < 1.0) || p.budget == 0 || !(p.model_error >= 0.0) {
                return bad("ptum: epsilon >= 0, delta in (0,1), budget >= 1 and model_error >= 0 required");
            }
        }
        if let Some(s) = &self.sequential {
            s.validate().map_err(|e| HarnessError::Config(format!("sequential: {e}")))?;
        }
        Ok(())
    }

    pub fn ptum_section(&self) -> Result<&PtumSection, HarnessError> {
        self.ptum.as_ref().ok_or_else(|| HarnessError::Config("this command needs a `ptum` section".into()))
    }

    pub fn sequential_section(&self) -> Result<&SequentialConfig, HarnessError> {
        self.sequential.as_ref().ok_or_else(|| HarnessError::Config("this command needs a `sequential` section".into()))
    }

    pub fn csv_path(&self, suffix: &str) -> PathBuf {
        self.output.dir.join(format!("{}_{suffix}.csv", self.output.prefix))
    }

    pub fn summary_path(&self, suffix: &str) -> PathBuf {
        self.output.dir.join(format!("{}_{suffix}_summary.json", self.output.prefix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROOMS: &str = r#"{
        "environment": {"scenario": "two-rooms", "width": 12, "height": 12, "num_tasks": 12, "gamma": 0.99},
        "ptum": {"epsilon": 0.1, "delta": 0.01, "budget": 100000},
        "num_runs": 100
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(TWO_ROOMS).unwrap();
        assert_eq!(cfg.level, 0.99);
        assert_eq!(cfg.base_seed, 0);
        match cfg.environment {
            Environment::TwoRooms { layout, failure_prob, hidden, .. } => {
                assert_eq!(layout, TwoRoomsLayout::GoalsAndDoors);
                assert_eq!(failure_prob, 0.1);
                assert_eq!(hidden, None);
            }
            _ => panic!("wrong scenario"),
        }
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_json(TWO_ROOMS).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "",
            "{}",
            &TWO_ROOMS.replace("\"num_runs\": 100", "\"num_runs\": 0"),
            &TWO_ROOMS.replace("two-rooms", "three-rooms"),
            &TWO_ROOMS.replace("\"budget\"", "\"budgett\""),
            &TWO_ROOMS.replace("0.99}", "1.5}"),
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                n += 1;
            }
        }
        assert!(n > 0);
    }
}
