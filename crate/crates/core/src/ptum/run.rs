use serde::{Deserialize, Serialize};

use super::confidence::{consistent_at, value_stats_at, ConfidenceParams};
use super::{select_query, ApproxModelSet, EmpiricalModel, PLANNING_TOL};
use crate::envs::GenerativeModel;
use crate::error::{invalid, Error, Result};
use crate::mdp::{value_iteration, Policy};

/// True when the uncertainty is small enough to attempt transfer. Exact
/// models (`Δ = 0`) always pass, including with `ε = 0`.
pub fn transfer_gate(delta: f64, epsilon: f64, gamma: f64) -> Result<bool> {
    if delta < 0.0 || epsilon < 0.0 || gamma < 0.0 || delta.is_nan() || epsilon.is_nan() {
        return invalid("gate inputs must be non-negative");
    }
    if delta == 0.0 {
        return Ok(true);
    }
    Ok(delta < epsilon * (1.0 - gamma) / (4.0 * (1.0 + gamma)))
}

/// Slack absorbing planning error in value comparisons.
fn value_slack(approx: &ApproxModelSet) -> f64 {
    4.0 * PLANNING_TOL * approx.value_scale()
}

/// First active model whose optimal policy is near-optimal in every active
/// model, as a position in `approx`.
pub fn check_stop(active: &[usize], approx: &ApproxModelSet, epsilon: f64) -> Option<(usize, Policy)> {
    let g = approx.gamma();
    let delta = approx.delta().max();
    let threshold = -epsilon + 2.0 * delta * (1.0 + g) / (1.0 - g);
    debug_assert!(threshold <= 0.0, "stopping slack must be non-negative in transfer mode");
    let slack = value_slack(approx);
    active
        .iter()
        .copied()
        .find(|&i| active.iter().all(|&j| approx.stop_margin(i, j) >= threshold - slack))
        .map(|i| (i, approx.policy(i).clone()))
}

/// Per-pair sample count for the uniform baseline at accuracy `(ε, δ)`.
pub fn default_fallback_per_pair(num_pairs: usize, epsilon: f64, delta: f64, gamma: f64) -> u64 {
    let h = 1.0 - gamma;
    let raw = 2.0 * (4.0 * num_pairs as f64 / delta).ln() / (epsilon * epsilon * h * h * h);
    if raw.is_finite() && raw < u64::MAX as f64 {
        raw.ceil().max(1.0) as u64
    } else {
        u64::MAX
    }
}

/// Samples every pair `per_pair` times and plans on the empirical model.
pub fn uniform_pac_fallback(g: &mut GenerativeModel, per_pair: u64) -> Result<(Policy, EmpiricalModel)> {
    if per_pair == 0 {
        return invalid("fallback needs at least one sample per pair");
    }
    let (s_n, a_n) = (g.num_states(), g.num_actions());
    let mut emp = EmpiricalModel::new(s_n, a_n, g.reward_support());
    for round in 0..per_pair {
        for s in 0..s_n {
            for a in 0..a_n {
                match g.query(s, a) {
                    Ok(x) => emp.record(s, a, &x),
                    Err(Error::BudgetExceeded { used }) => return Err(Error::FallbackBudget { completed: round, used }),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let (_, policy) = value_iteration(&emp.to_mdp(g.gamma())?, PLANNING_TOL);
    Ok((policy, emp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PtumMode {
    TransferStopped,
    FallbackGate,
    FallbackBudget,
}

impl PtumMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PtumMode::TransferStopped => "transfer-stopped",
            PtumMode::FallbackGate => "fallback-gate",
            PtumMode::FallbackBudget => "fallback-budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtumParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Identification budget `n`.
    pub budget: u64,
    /// Fixed per-pair count for the uniform fallback.
    #[serde(default)]
    pub fallback_per_pair: Option<u64>,
    /// Cap on the fallback's total queries; defaults to `budget`.
    #[serde(default)]
    pub fallback_cap: Option<u64>,
    #[serde(default)]
    pub record_queries: bool,
}

impl PtumParams {
    pub fn new(epsilon: f64, delta: f64, budget: u64) -> Self {
        PtumParams { epsilon, delta, budget, fallback_per_pair: None, fallback_cap: None, record_queries: false }
    }

    /// Per-pair fallback count: the fixed override, else the accuracy-based
    /// default capped by the fallback budget.
    pub fn fallback_count(&self, num_pairs: usize, gamma: f64, remaining: Option<u64>) -> u64 {
        if let Some(k) = self.fallback_per_pair {
            return k;
        }
        let mut cap = self.fallback_cap.unwrap_or(self.budget);
        if let Some(r) = remaining {
            cap = cap.min(r);
        }
        default_fallback_per_pair(num_pairs, self.epsilon, self.delta, gamma).min(cap / num_pairs as u64).max(1)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid("δ must lie in (0,1)");
        }
        if !(self.epsilon >= 0.0) {
            return invalid("ε must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: u64,
    pub s: Option<usize>,
    pub a: Option<usize>,
    pub active: usize,
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub t: u64,
    pub label: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PtumResult {
    pub policy: Policy,
    /// Identification queries.
    pub tau: u64,
    pub mode: PtumMode,
    /// Label of the model whose policy was returned.
    pub chosen: Option<usize>,
    pub initial: Vec<usize>,
    pub survivors: Vec<usize>,
    pub eliminations: Vec<Elimination>,
    pub trace: Vec<TraceStep>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub query_log: Option<Vec<(u64, usize, usize)>>,
    pub fallback_queries: u64,
    /// Every model was eliminated before a stop.
    pub emptied: bool,
    #[serde(skip)]
    pub empirical: Option<EmpiricalModel>,
}

impl PtumResult {
    /// Whether `label` was never eliminated.
    pub fn survived(&self, label: usize) -> bool {
        self.initial.contains(&label) && !self.eliminations.iter().any(|e| e.label == label)
    }

    pub fn total_queries(&self) -> u64 {
        self.tau + self.fallback_queries
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Identifies a near-optimal policy for the task hidden in `g`.
pub fn run_ptum(approx: &ApproxModelSet, g: &mut GenerativeModel, params: &PtumParams) -> Result<PtumResult> {
    params.validate()?;
    if g.num_states() != approx.num_states() || g.num_actions() != approx.num_actions() {
        return Err(Error::ShapeMismatch("generative model and candidates differ in shape".into()));
    }
    let gamma = approx.gamma();
    let initial: Vec<usize> = approx.labels().to_vec();
    let mut result = PtumResult {
        policy: Policy::new(vec![]),
        tau: 0,
        mode: PtumMode::TransferStopped,
        chosen: None,
        initial: initial.clone(),
        survivors: initial.clone(),
        eliminations: vec![],
        trace: vec![],
        query_log: params.record_queries.then(Vec::new),
        fallback_queries: 0,
        emptied: false,
        empirical: None,
    };
    let mut emp = EmpiricalModel::new(g.num_states(), g.num_actions(), g.reward_support());

    if !transfer_gate(approx.delta().max(), params.epsilon, gamma)? {
        result.mode = PtumMode::FallbackGate;
        return finish_with_fallback(result, emp, g, params);
    }

    let conf = ConfidenceParams::for_set(approx, params.budget, params.delta);
    let mut active: Vec<usize> = (0..approx.len()).collect();
    let mut t = 0u64;
    result.trace.push(TraceStep { t: 0, s: None, a: None, active: active.len(), stopped: false });
    let mut query: Option<(usize, usize)> = None;
    loop {
        if let Some((i, policy)) = check_stop(&active, approx, params.epsilon) {
            result.trace.last_mut().unwrap().stopped = true;
            result.policy = policy;
            result.chosen = Some(approx.label(i));
            break;
        }
        if t >= params.budget {
            result.mode = PtumMode::FallbackBudget;
            break;
        }
        let (s, a) = *query.get_or_insert_with(|| {
            let (s, a, _) = select_query(&active, approx);
            (s, a)
        });
        let sample = match g.query(s, a) {
            Ok(x) => x,
            Err(Error::BudgetExceeded { .. }) => {
                result.mode = PtumMode::FallbackBudget;
                break;
            }
            Err(e) => return Err(e),
        };
        emp.record(s, a, &sample);
        t += 1;
        if let Some(log) = result.query_log.as_mut() {
            log.push((t, s, a));
        }
        if emp.count(s, a) > 1 {
            let stats = value_stats_at(&emp, approx, s, a);
            let before = active.len();
            active.retain(|&i| {
                let ok = consistent_at(i, &emp, approx, &conf, s, a, &stats);
                if !ok {
                    result.eliminations.push(Elimination { t, label: approx.label(i) });
                }
                ok
            });
            if active.len() != before {
                query = None;
            }
        }
        result.trace.push(TraceStep { t, s: Some(s), a: Some(a), active: active.len(), stopped: false });
        if active.is_empty() {
            log::warn!("every candidate was eliminated after {t} queries");
            result.emptied = true;
            result.mode = PtumMode::FallbackBudget;
            break;
        }
    }
    result.tau = t;
    result.survivors = active.iter().map(|&i| approx.label(i)).collect();
    if result.mode == PtumMode::FallbackBudget {
        return finish_with_fallback(result, emp, g, params);
    }
    result.empirical = Some(emp);
    Ok(result)
}

fn finish_with_fallback(
    mut result: PtumResult,
    mut emp: EmpiricalModel,
    g: &mut GenerativeModel,
    params: &PtumParams,
) -> Result<PtumResult> {
    let per_pair = params.fallback_count(g.num_states() * g.num_actions(), g.gamma(), g.remaining());
    let before = g.queries();
    let (policy, extra) = uniform_pac_fallback(g, per_pair)?;
    result.fallback_queries = g.queries() - before;
    emp.merge(&extra)?;
    result.policy = policy;
    result.empirical = Some(emp);
    Ok(result)
}
