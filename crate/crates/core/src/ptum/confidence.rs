use super::{ApproxModelSet, DeltaBounds, EmpiricalModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    pub num_states: usize,
    pub num_actions: usize,
    /// Query budget `n`.
    pub budget: u64,
    pub num_models: usize,
    pub delta: f64,
    pub gamma: f64,
    pub bounds: DeltaBounds,
}

impl ConfidenceParams {
    pub fn for_set(approx: &ApproxModelSet, budget: u64, delta: f64) -> Self {
        ConfidenceParams {
            num_states: approx.num_states(),
            num_actions: approx.num_actions(),
            budget,
            num_models: approx.len(),
            delta,
            gamma: approx.gamma(),
            bounds: approx.delta(),
        }
    }

    fn scale(&self) -> f64 {
        (self.num_states * self.num_actions) as f64 * self.budget.max(1) as f64 * (self.num_models + 1) as f64
            / self.delta
    }

    /// `log(8·SA·n·(|Θ|+1)/δ)`.
    pub fn log_term(&self) -> f64 {
        (8.0 * self.scale()).ln()
    }

    /// `log(4·SA·n·(|Θ|+1)/δ)`.
    pub fn log_term_sigma(&self) -> f64 {
        (4.0 * self.scale()).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radii {
    pub reward: f64,
    pub transition: f64,
    pub sigma_reward: f64,
    pub sigma_transition: f64,
}

impl Radii {
    pub const UNBOUNDED: Radii = Radii {
        reward: f64::INFINITY,
        transition: f64::INFINITY,
        sigma_reward: f64::INFINITY,
        sigma_transition: f64::INFINITY,
    };
}

/// Radii from empirical spreads and the sample count; `sigma_value` is the
/// empirical spread of the reference value over next states.
pub fn radii_from_stats(n: u64, sigma_reward: f64, sigma_value: f64, params: &ConfidenceParams) -> Radii {
    if n <= 1 {
        return Radii::UNBOUNDED;
    }
    let (nf, nm1) = (n as f64, (n - 1) as f64);
    let l = params.log_term();
    let l2 = params.log_term_sigma();
    let h = 1.0 / (1.0 - params.gamma);
    let b = &params.bounds;
    let sigma = (2.0 * l2 / nm1).sqrt();
    Radii {
        reward: (2.0 * sigma_reward * sigma_reward * l / nf).sqrt() + 7.0 * l / (3.0 * nm1) + b.reward,
        transition: (2.0 * sigma_value * sigma_value * l / nf).sqrt() + 7.0 * l * h / (3.0 * nm1) + b.transition,
        sigma_reward: sigma + b.sigma_reward,
        sigma_transition: h * sigma + b.sigma_transition,
    }
}

/// Confidence radii at `(s, a)`; the transition radius is for the reference
/// value `v_theta_prime`.
pub fn confidence_radii(emp: &EmpiricalModel, s: usize, a: usize, v_theta_prime: &[f64], params: &ConfidenceParams) -> Radii {
    let (_, sr) = emp.reward_mean_std(s, a);
    let (_, sp) = emp.value_mean_std(s, a, v_theta_prime);
    radii_from_stats(emp.count(s, a), sr, sp, params)
}

/// Whether model `i` is consistent with the samples at one pair, against
/// every reference value in the set.
pub(crate) fn consistent_at(
    i: usize,
    emp: &EmpiricalModel,
    approx: &ApproxModelSet,
    params: &ConfidenceParams,
    s: usize,
    a: usize,
    value_stats: &[(f64, f64)],
) -> bool {
    let n = emp.count(s, a);
    if n <= 1 {
        return true;
    }
    let sa = s * approx.num_actions() + a;
    let (r_hat, sr_hat) = emp.reward_mean_std(s, a);
    let base = radii_from_stats(n, sr_hat, 0.0, params);
    if (r_hat - approx.reward_mean(i, sa)).abs() > base.reward {
        return false;
    }
    if (sr_hat - approx.reward_std(i, sa)).abs() > base.sigma_reward {
        return false;
    }
    for (j, &(pv_hat, sp_hat)) in value_stats.iter().enumerate() {
        let r = radii_from_stats(n, sr_hat, sp_hat, params);
        if (pv_hat - approx.next_value(i, j, sa)).abs() > r.transition {
            return false;
        }
        if (sp_hat - approx.next_std(i, j, sa)).abs() > r.sigma_transition {
            return false;
        }
    }
    true
}

pub(crate) fn value_stats_at(emp: &EmpiricalModel, approx: &ApproxModelSet, s: usize, a: usize) -> Vec<(f64, f64)> {
    (0..approx.len()).map(|j| emp.value_mean_std(s, a, approx.value(j))).collect()
}

/// Keeps the members of `active` consistent with the samples at every pair.
pub fn prune_confidence_set(
    active: &[usize],
    emp: &EmpiricalModel,
    approx: &ApproxModelSet,
    params: &ConfidenceParams,
) -> Vec<usize> {
    let mut keep = active.to_vec();
    for s in 0..approx.num_states() {
        for a in 0..approx.num_actions() {
            if emp.count(s, a) <= 1 {
                continue;
            }
            let stats = value_stats_at(emp, approx, s, a);
            keep.retain(|&i| consistent_at(i, emp, approx, params, s, a, &stats));
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Sample;
    use crate::mdp::TabularMdp;

    fn params(bounds: DeltaBounds) -> ConfidenceParams {
        ConfidenceParams { num_states: 2, num_actions: 2, budget: 100, num_models: 3, delta: 0.1, gamma: 0.9, bounds }
    }

    #[test]
    fn unbounded_without_samples() {
        let emp = EmpiricalModel::new(2, 2, &[0.0, 1.0]);
        assert_eq!(confidence_radii(&emp, 0, 0, &[0.0, 1.0], &params(DeltaBounds::default())), Radii::UNBOUNDED);
        assert_eq!(radii_from_stats(1, 0.3, 0.3, &params(DeltaBounds::default())), Radii::UNBOUNDED);
    }

    #[test]
    fn reward_radius_formula() {
        let p = params(DeltaBounds::default());
        let l = (8.0f64 * 2.0 * 2.0 * 100.0 * 4.0 / 0.1).ln();
        assert!((p.log_term() - l).abs() < 1e-12);
        let r = radii_from_stats(10, 0.5, 0.0, &p);
        let by_hand = (2.0 * 0.25 * l / 10.0).sqrt() + 7.0 * l / 27.0;
        assert!((r.reward - by_hand).abs() < 1e-12);
        let l2 = (4.0f64 * 2.0 * 2.0 * 100.0 * 4.0 / 0.1).ln();
        assert!((r.sigma_reward - (2.0 * l2 / 9.0).sqrt()).abs() < 1e-12);
        assert!((r.sigma_transition - 10.0 * (2.0 * l2 / 9.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reward_radius_tends_to_bound() {
        let p = params(DeltaBounds { reward: 0.05, ..Default::default() });
        let r = radii_from_stats(u64::MAX / 2, 0.0, 0.0, &p);
        assert!((r.reward - 0.05).abs() < 1e-12);
    }

    fn point_models() -> ApproxModelSet {
        let support = vec![0.0, 0.5, 1.0];
        let mk = |u: usize| {
            let mut q = vec![0.0; 3];
            q[u] = 1.0;
            TabularMdp::new(1, 1, 0.9, support.clone(), vec![1.0], q).unwrap()
        };
        ApproxModelSet::new(vec![mk(0), mk(1), mk(2)], DeltaBounds::default()).unwrap()
    }

    #[test]
    fn eliminates_inconsistent_reward() {
        let set = point_models();
        let p = ConfidenceParams::for_set(&set, 100, 0.1);
        let mut emp = EmpiricalModel::new(1, 1, &[0.0, 0.5, 1.0]);
        assert_eq!(prune_confidence_set(&[0, 1, 2], &emp, &set, &p), vec![0, 1, 2]);
        for _ in 0..200 {
            emp.record(0, 0, &Sample { next_state: 0, reward_index: 2, reward: 1.0 });
        }
        assert_eq!(prune_confidence_set(&[0, 1, 2], &emp, &set, &p), vec![2]);
    }
}
