use crate::envs::Sample;
use crate::error::{invalid, Error, Result};
use crate::mdp::TabularMdp;

/// Per-pair sample counts: visits, reward outcomes and next states.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    num_states: usize,
    num_actions: usize,
    support: Vec<f64>,
    counts: Vec<u32>,
    reward_counts: Vec<u32>,
    next_counts: Vec<u32>,
}

impl EmpiricalModel {
    pub fn new(num_states: usize, num_actions: usize, support: &[f64]) -> Self {
        let sa = num_states * num_actions;
        EmpiricalModel {
            num_states,
            num_actions,
            support: support.to_vec(),
            counts: vec![0; sa],
            reward_counts: vec![0; sa * support.len()],
            next_counts: vec![0; sa * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn record(&mut self, s: usize, a: usize, x: &Sample) {
        let i = self.idx(s, a);
        self.counts[i] += 1;
        self.reward_counts[i * self.support.len() + x.reward_index] += 1;
        self.next_counts[i * self.num_states + x.next_state] += 1;
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        u64::from(self.counts[self.idx(s, a)])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().map_or(0, u64::from)
    }

    pub fn reward_counts(&self, s: usize, a: usize) -> &[u32] {
        let (i, u) = (self.idx(s, a), self.support.len());
        &self.reward_counts[i * u..(i + 1) * u]
    }

    pub fn next_counts(&self, s: usize, a: usize) -> &[u32] {
        let (i, n) = (self.idx(s, a), self.num_states);
        &self.next_counts[i * n..(i + 1) * n]
    }

    /// Mean and unbiased standard deviation of `values` under the counts.
    /// Zero when fewer than two samples exist.
    fn moments(counts: &[u32], values: &[f64]) -> (f64, f64) {
        let n: f64 = counts.iter().map(|&c| f64::from(c)).sum();
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let mean = counts.iter().zip(values).map(|(&c, v)| f64::from(c) * v).sum::<f64>() / n;
        if n < 2.0 {
            return (mean, 0.0);
        }
        let ss: f64 = counts
            .iter()
            .zip(values)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, v)| f64::from(c) * (v - mean) * (v - mean))
            .sum();
        (mean, (ss / (n - 1.0)).sqrt())
    }

    pub fn reward_mean_std(&self, s: usize, a: usize) -> (f64, f64) {
        Self::moments(self.reward_counts(s, a), &self.support)
    }

    /// `p̂(s,a)ᵀv` and the unbiased standard deviation of `v(S')`.
    pub fn value_mean_std(&self, s: usize, a: usize, v: &[f64]) -> (f64, f64) {
        Self::moments(self.next_counts(s, a), v)
    }

    pub fn next_state_dist(&self, s: usize, a: usize) -> Vec<f64> {
        let n = self.count(s, a).max(1) as f64;
        self.next_counts(s, a).iter().map(|&c| f64::from(c) / n).collect()
    }

    pub fn reward_dist(&self, s: usize, a: usize) -> Vec<f64> {
        let n = self.count(s, a).max(1) as f64;
        self.reward_counts(s, a).iter().map(|&c| f64::from(c) / n).collect()
    }

    pub fn merge(&mut self, other: &EmpiricalModel) -> Result<()> {
        if other.num_states != self.num_states || other.num_actions != self.num_actions || other.support != self.support {
            return Err(Error::ShapeMismatch("empirical models differ in shape".into()));
        }
        let add = |a: &mut Vec<u32>, b: &Vec<u32>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.counts, &other.counts);
        add(&mut self.reward_counts, &other.reward_counts);
        add(&mut self.next_counts, &other.next_counts);
        Ok(())
    }

    /// Maximum-likelihood MDP. Every pair needs at least one sample.
    pub fn to_mdp(&self, gamma: f64) -> Result<TabularMdp> {
        if self.min_count() == 0 {
            return invalid("every state-action pair needs a sample");
        }
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let mut p = Vec::with_capacity(s_n * a_n * s_n);
        let mut q = Vec::with_capacity(s_n * a_n * self.support.len());
        for s in 0..s_n {
            for a in 0..a_n {
                p.extend(self.next_state_dist(s, a));
                q.extend(self.reward_dist(s, a));
            }
        }
        TabularMdp::new(s_n, a_n, gamma, self.support.clone(), p, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(next_state: usize, reward_index: usize, support: &[f64]) -> Sample {
        Sample { next_state, reward_index, reward: support[reward_index] }
    }

    #[test]
    fn statistics_use_unbiased_variance() {
        let support = [0.0, 1.0];
        let mut e = EmpiricalModel::new(2, 1, &support);
        assert_eq!(e.reward_mean_std(0, 0), (0.0, 0.0));
        for (ns, r) in [(0, 0), (1, 1), (1, 1), (0, 1)] {
            e.record(0, 0, &sample(ns, r, &support));
        }
        let (m, sd) = e.reward_mean_std(0, 0);
        assert_eq!(m, 0.75);
        // Sum of squares 0.5625 + 3 * 0.0625 = 0.75 over N-1 = 3.
        assert!((sd - 0.5).abs() < 1e-15);
        let (pv, psd) = e.value_mean_std(0, 0, &[0.0, 2.0]);
        assert_eq!(pv, 1.0);
        assert!((psd - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.next_counts(0, 0).iter().sum::<u32>() as u64, e.count(0, 0));
        assert_eq!(e.next_state_dist(0, 0), vec![0.5, 0.5]);
    }

    #[test]
    fn single_sample_has_zero_spread() {
        let support = [0.0, 1.0];
        let mut e = EmpiricalModel::new(1, 1, &support);
        e.record(0, 0, &sample(0, 1, &support));
        assert_eq!(e.reward_mean_std(0, 0), (1.0, 0.0));
    }

    #[test]
    fn merge_and_plan() {
        let support = [0.0, 1.0];
        let mut a = EmpiricalModel::new(1, 2, &support);
        a.record(0, 0, &sample(0, 1, &support));
        assert!(a.to_mdp(0.5).is_err());
        let mut b = EmpiricalModel::new(1, 2, &support);
        b.record(0, 1, &sample(0, 0, &support));
        a.merge(&b).unwrap();
        let m = a.to_mdp(0.5).unwrap();
        assert_eq!(m.reward(0, 0), 1.0);
        assert_eq!(m.reward(0, 1), 0.0);
        assert_eq!(a.total(), 2);
    }
}
