use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Markov chain over task indices. `entry(i, j)` is the probability of
/// moving to task `i` from task `j`, so columns are distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskChain {
    k: usize,
    transition: Vec<f64>,
    initial: Vec<f64>,
}

fn sample_from<R: Rng>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

impl TaskChain {
    /// `rows[i][j]` = P(next = i | current = j).
    pub fn new(rows: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) || initial.len() != k {
            return invalid("task chain needs a square matrix and a matching initial distribution");
        }
        let transition: Vec<f64> = rows.into_iter().flatten().collect();
        if transition.iter().chain(&initial).any(|x| !(*x >= 0.0)) {
            return invalid("task chain entries must be non-negative");
        }
        for j in 0..k {
            let sum: f64 = (0..k).map(|i| transition[i * k + j]).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return invalid(format!("column {j} sums to {sum}"));
            }
        }
        if (initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("initial distribution does not sum to 1");
        }
        Ok(TaskChain { k, transition, initial })
    }

    /// Successor with probability `next`, two ahead with `skip`, same task
    /// with `stay` (indices wrap around). Starts from task 0.
    pub fn sparse_successor(k: usize, next: f64, skip: f64, stay: f64) -> Result<Self> {
        let mut rows = vec![vec![0.0; k]; k];
        for j in 0..k {
            rows[(j + 1) % k][j] += next;
            rows[(j + 2) % k][j] += skip;
            rows[j][j] += stay;
        }
        let mut initial = vec![0.0; k];
        initial[0] = 1.0;
        Self::new(rows, initial)
    }

    pub fn identity(k: usize) -> Result<Self> {
        let rows = (0..k).map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self::new(rows, vec![1.0 / k as f64; k])
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![vec![1.0 / k as f64; k]; k], vec![1.0 / k as f64; k])
    }

    pub fn num_tasks(&self) -> usize {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.entry(i, j)).collect()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn sample_initial<R: Rng>(&self, rng: &mut R) -> usize {
        sample_from(self.initial.iter().copied(), rng)
    }

    /// Draws the next task from column `current`.
    pub fn sample_next<R: Rng>(&self, current: usize, rng: &mut R) -> usize {
        assert!(current < self.k, "task index out of range");
        sample_from((0..self.k).map(|i| self.entry(i, current)), rng)
    }

    /// Stationary distribution by power iteration from uniform.
    pub fn stationary(&self, iters: usize) -> Vec<f64> {
        let mut w = vec![1.0 / self.k as f64; self.k];
        for _ in 0..iters {
            w = (0..self.k).map(|i| (0..self.k).map(|j| self.entry(i, j) * w[j]).sum()).collect();
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn identity_stays() {
        let c = TaskChain::identity(4).unwrap();
        let mut rng = stream(0, Stream::TaskChain);
        for t in 0..4 {
            assert_eq!(c.sample_next(t, &mut rng), t);
        }
    }

    #[test]
    fn sparse_chain_frequencies() {
        let c = TaskChain::sparse_successor(8, 0.97, 0.015, 0.015).unwrap();
        let mut rng = stream(1, Stream::TaskChain);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            match c.sample_next(3, &mut rng) {
                4 => counts[0] += 1,
                5 => counts[1] += 1,
                3 => counts[2] += 1,
                other => panic!("impossible successor {other}"),
            }
        }
        for (c, p) in counts.iter().zip([0.97, 0.015, 0.015]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn uniform_column_chi_square() {
        let k = 5;
        let c = TaskChain::uniform(k).unwrap();
        let mut rng = stream(2, Stream::TaskChain);
        let n = 100_000;
        let mut counts = vec![0f64; k];
        for _ in 0..n {
            counts[c.sample_next(0, &mut rng)] += 1.0;
        }
        let e = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|o| (o - e) * (o - e) / e).sum();
        // 99th percentile of chi-square with 4 degrees of freedom.
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn long_run_matches_stationary() {
        let rows = vec![vec![0.5, 0.2, 0.3], vec![0.3, 0.6, 0.3], vec![0.2, 0.2, 0.4]];
        let c = TaskChain::new(rows, vec![1.0, 0.0, 0.0]).unwrap();
        let pi = c.stationary(1000);
        let mut rng = stream(3, Stream::TaskChain);
        let mut counts = [0f64; 3];
        let mut t = c.sample_initial(&mut rng);
        let n = 100_000;
        for _ in 0..n {
            t = c.sample_next(t, &mut rng);
            counts[t] += 1.0;
        }
        for (c, p) in counts.iter().zip(pi) {
            assert!((c / n as f64 - p).abs() < 0.02);
        }
    }

    #[test]
    fn rejects_non_stochastic_columns() {
        assert!(TaskChain::new(vec![vec![0.5, 0.5], vec![0.4, 0.5]], vec![0.5, 0.5]).is_err());
    }
}
