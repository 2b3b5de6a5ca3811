use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub next_state: usize,
    pub reward_index: usize,
    pub reward: f64,
}

/// Sampling oracle for a hidden task. Only shapes, the reward support and
/// query results are visible.
pub struct GenerativeModel {
    mdp: TabularMdp,
    next: Vec<WeightedIndex<f64>>,
    reward: Vec<WeightedIndex<f64>>,
    queries: u64,
    budget: Option<u64>,
    rng: RunRng,
}

impl GenerativeModel {
    pub fn new(mdp: TabularMdp, rng: RunRng) -> Self {
        let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
        let mut next = Vec::with_capacity(s_n * a_n);
        let mut reward = Vec::with_capacity(s_n * a_n);
        for s in 0..s_n {
            for a in 0..a_n {
                next.push(WeightedIndex::new(mdp.p(s, a)).expect("stochastic row"));
                reward.push(WeightedIndex::new(mdp.q(s, a)).expect("stochastic row"));
            }
        }
        GenerativeModel { mdp, next, reward, queries: 0, budget: None, rng }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn set_budget(&mut self, budget: Option<u64>) {
        self.budget = budget;
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    pub fn reward_support(&self) -> &[f64] {
        self.mdp.reward_support()
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Queries left before the budget trips, if one is armed.
    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.queries))
    }

    pub fn query(&mut self, s: usize, a: usize) -> Result<Sample> {
        assert!(s < self.num_states() && a < self.num_actions(), "query out of range");
        if self.remaining() == Some(0) {
            return Err(Error::BudgetExceeded { used: self.queries });
        }
        self.queries += 1;
        let i = s * self.num_actions() + a;
        let next_state = self.next[i].sample(&mut self.rng);
        let reward_index = self.reward[i].sample(&mut self.rng);
        Ok(Sample { next_state, reward_index, reward: self.mdp.reward_support()[reward_index] })
    }
}
