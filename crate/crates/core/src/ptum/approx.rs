use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{dist_std, dot, policy_evaluation, value_iteration, Policy, TabularMdp, ValueFunction};

/// Bounds on how far each candidate may be from the task it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub reward: f64,
    pub transition: f64,
    pub sigma_reward: f64,
    pub sigma_transition: f64,
}

impl DeltaBounds {
    pub fn uniform(x: f64) -> Self {
        DeltaBounds { reward: x, transition: x, sigma_reward: x, sigma_transition: x }
    }

    pub fn max(&self) -> f64 {
        self.reward.max(self.transition).max(self.sigma_reward).max(self.sigma_transition)
    }

    fn validate(&self) -> Result<()> {
        if [self.reward, self.transition, self.sigma_reward, self.sigma_transition].iter().any(|x| !(*x >= 0.0)) {
            return invalid("uncertainty bounds must be non-negative");
        }
        Ok(())
    }
}

pub const PLANNING_TOL: f64 = 1e-8;

/// Candidate models with everything identification needs precomputed.
///
/// Per-pair tables are indexed `[θ][θ'][s·A + a]` (or `[θ][s·A + a]`).
#[derive(Debug, Clone)]
pub struct ApproxModelSet {
    labels: Vec<usize>,
    models: Vec<TabularMdp>,
    values: Vec<ValueFunction>,
    policies: Vec<Policy>,
    xval: Vec<ValueFunction>,
    stop_margin: Vec<f64>,
    reward_mean: Vec<f64>,
    reward_std: Vec<f64>,
    next_value: Vec<f64>,
    next_std: Vec<f64>,
    reward_gap: Vec<f64>,
    transition_gap: Vec<f64>,
    value_scale: f64,
    delta: DeltaBounds,
}

impl ApproxModelSet {
    pub fn new(models: Vec<TabularMdp>, delta: DeltaBounds) -> Result<Self> {
        let labels = (0..models.len()).collect();
        Self::with_labels(models, labels, delta)
    }

    pub fn with_labels(models: Vec<TabularMdp>, labels: Vec<usize>, delta: DeltaBounds) -> Result<Self> {
        delta.validate()?;
        if models.is_empty() || labels.len() != models.len() {
            return invalid("need at least one model and one label per model");
        }
        if models.iter().any(|m| !m.same_shape(&models[0])) {
            return Err(Error::ShapeMismatch("candidate models differ in shape".into()));
        }
        let k = models.len();
        let (s_n, a_n) = (models[0].num_states(), models[0].num_actions());
        let sa = s_n * a_n;
        let planned: Vec<(ValueFunction, Policy)> = models.iter().map(|m| value_iteration(m, PLANNING_TOL)).collect();
        let (values, policies): (Vec<_>, Vec<_>) = planned.into_iter().unzip();
        let mut xval = Vec::with_capacity(k * k);
        let mut stop_margin = Vec::with_capacity(k * k);
        for pi in &policies {
            for (j, m) in models.iter().enumerate() {
                let v = policy_evaluation(m, pi, PLANNING_TOL);
                stop_margin.push(v.iter().zip(values[j].iter()).map(|(x, y)| x - y).fold(f64::INFINITY, f64::min));
                xval.push(v);
            }
        }
        let mut reward_mean = Vec::with_capacity(k * sa);
        let mut reward_std = Vec::with_capacity(k * sa);
        for m in &models {
            for s in 0..s_n {
                for a in 0..a_n {
                    reward_mean.push(m.reward(s, a));
                    reward_std.push(dist_std(m.q(s, a), m.reward_support()));
                }
            }
        }
        let mut next_value = Vec::with_capacity(k * k * sa);
        let mut next_std = Vec::with_capacity(k * k * sa);
        let mut reward_gap = Vec::with_capacity(k * k * sa);
        let mut transition_gap = Vec::with_capacity(k * k * sa);
        for (i, m) in models.iter().enumerate() {
            for (j, other) in models.iter().enumerate() {
                for s in 0..s_n {
                    for a in 0..a_n {
                        next_value.push(dot(m.p(s, a), &values[j]));
                        next_std.push(dist_std(m.p(s, a), &values[j]));
                        reward_gap.push((m.reward(s, a) - other.reward(s, a)).abs());
                        let gap: f64 =
                            m.p(s, a).iter().zip(other.p(s, a)).zip(values[i].iter()).map(|((x, y), v)| (x - y) * v).sum();
                        transition_gap.push(gap.abs());
                    }
                }
            }
        }
        let value_scale = values.iter().flat_map(|v| v.iter()).fold(1.0f64, |m, x| m.max(x.abs()));
        Ok(ApproxModelSet {
            labels,
            models,
            values,
            policies,
            xval,
            stop_margin,
            reward_mean,
            reward_std,
            next_value,
            next_std,
            reward_gap,
            transition_gap,
            value_scale,
            delta,
        })
    }

    /// The members at positions `keep`, in that order, with their labels.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&i| i >= self.len()) {
            return invalid("subset indices must be non-empty and in range");
        }
        let k = self.len();
        let sa = self.num_pairs();
        let pick = |t: &[f64], width: usize| -> Vec<f64> {
            keep.iter().flat_map(|&i| t[i * width..(i + 1) * width].iter().copied()).collect()
        };
        let pick2 = |t: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(keep.len() * keep.len() * sa);
            for &i in keep {
                for &j in keep {
                    out.extend_from_slice(&t[(i * k + j) * sa..(i * k + j + 1) * sa]);
                }
            }
            out
        };
        let pairs: Vec<usize> = keep.iter().flat_map(|&i| keep.iter().map(move |&j| i * k + j)).collect();
        Ok(ApproxModelSet {
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            models: keep.iter().map(|&i| self.models[i].clone()).collect(),
            values: keep.iter().map(|&i| self.values[i].clone()).collect(),
            policies: keep.iter().map(|&i| self.policies[i].clone()).collect(),
            xval: pairs.iter().map(|&p| self.xval[p].clone()).collect(),
            stop_margin: pairs.iter().map(|&p| self.stop_margin[p]).collect(),
            reward_mean: pick(&self.reward_mean, sa),
            reward_std: pick(&self.reward_std, sa),
            next_value: pick2(&self.next_value),
            next_std: pick2(&self.next_std),
            reward_gap: pick2(&self.reward_gap),
            transition_gap: pick2(&self.transition_gap),
            value_scale: self.value_scale,
            delta: self.delta,
        })
    }

    /// Members whose label is in `labels`, in set order.
    pub fn restrict_to_labels(&self, labels: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| labels.contains(&self.labels[i])).collect();
        self.subset(&keep)
    }

    pub fn with_delta(mut self, delta: DeltaBounds) -> Result<Self> {
        delta.validate()?;
        self.delta = delta;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.models[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.models[0].num_actions()
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.models[0].gamma()
    }

    pub fn delta(&self) -> DeltaBounds {
        self.delta
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn model(&self, i: usize) -> &TabularMdp {
        &self.models[i]
    }

    pub fn models(&self) -> &[TabularMdp] {
        &self.models
    }

    pub fn value(&self, i: usize) -> &ValueFunction {
        &self.values[i]
    }

    pub fn values(&self) -> &[ValueFunction] {
        &self.values
    }

    pub fn policy(&self, i: usize) -> &Policy {
        &self.policies[i]
    }

    /// Value of model `i`'s optimal policy in model `j`.
    pub fn xval(&self, i: usize, j: usize) -> &ValueFunction {
        &self.xval[i * self.len() + j]
    }

    /// `min_s (xval(i, j)(s) − V*_j(s))`.
    pub fn stop_margin(&self, i: usize, j: usize) -> f64 {
        self.stop_margin[i * self.len() + j]
    }

    /// Largest absolute optimal value over the set (at least 1).
    pub fn value_scale(&self) -> f64 {
        self.value_scale
    }

    pub fn reward_mean(&self, i: usize, sa: usize) -> f64 {
        self.reward_mean[i * self.num_pairs() + sa]
    }

    pub fn reward_std(&self, i: usize, sa: usize) -> f64 {
        self.reward_std[i * self.num_pairs() + sa]
    }

    fn pair(&self, i: usize, j: usize, sa: usize) -> usize {
        (i * self.len() + j) * self.num_pairs() + sa
    }

    /// `p̃_i(s,a)ᵀ Ṽ*_j`.
    pub fn next_value(&self, i: usize, j: usize, sa: usize) -> f64 {
        self.next_value[self.pair(i, j, sa)]
    }

    /// `σ̃ᵖ_i(s,a; j)`.
    pub fn next_std(&self, i: usize, j: usize, sa: usize) -> f64 {
        self.next_std[self.pair(i, j, sa)]
    }

    /// `|r̃_i(s,a) − r̃_j(s,a)|`.
    pub fn reward_gap(&self, i: usize, j: usize, sa: usize) -> f64 {
        self.reward_gap[self.pair(i, j, sa)]
    }

    /// `|(p̃_i(s,a) − p̃_j(s,a))ᵀ Ṽ*_i|`.
    pub fn transition_gap(&self, i: usize, j: usize, sa: usize) -> f64 {
        self.transition_gap[self.pair(i, j, sa)]
    }
}
