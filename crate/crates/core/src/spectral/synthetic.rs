use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;

use super::{BlockLayout, ObservationStore};
use crate::error::{invalid, Result};

/// Hidden Markov chain whose observations are blockwise distributions:
/// either the exact mean column or empirical frequencies of a fixed number
/// of draws per block.
#[derive(Debug, Clone)]
pub struct SyntheticHmm {
    pub o: DMatrix<f64>,
    /// `t[(i, j)] = P(next = i | current = j)`.
    pub t: DMatrix<f64>,
    pub stationary: Vec<f64>,
    pub layout: BlockLayout,
    pub draws_per_block: Option<usize>,
}

fn dirichlet<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

fn stationary(t: &DMatrix<f64>) -> Vec<f64> {
    let k = t.nrows();
    let mut p = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..10_000 {
        let next = t * &p;
        if (&next - &p).abs().max() < 1e-15 {
            return next.iter().copied().collect();
        }
        p = next;
    }
    p.iter().copied().collect()
}

impl SyntheticHmm {
    /// Random columns per block; `T` mixes a cyclic shift with random
    /// columns so the chain is irreducible, aperiodic and full rank.
    pub fn random<R: Rng>(k: usize, blocks: &[usize], draws_per_block: Option<usize>, rng: &mut R) -> Result<Self> {
        let layout = BlockLayout::new(blocks.to_vec())?;
        if k == 0 || k > layout.dim() {
            return invalid("need between one and dim hidden states");
        }
        let mut o = DMatrix::zeros(layout.dim(), k);
        for j in 0..k {
            for b in 0..layout.num_blocks() {
                let range = layout.block(b);
                for (i, x) in range.clone().zip(dirichlet(range.len(), rng)) {
                    o[(i, j)] = x;
                }
            }
        }
        let mut t = DMatrix::zeros(k, k);
        for j in 0..k {
            let col = dirichlet(k, rng);
            for i in 0..k {
                t[(i, j)] = 0.4 * col[i];
            }
            t[((j + 1) % k, j)] += 0.5;
            t[(j, j)] += 0.1;
        }
        Ok(SyntheticHmm { stationary: stationary(&t), o, t, layout, draws_per_block })
    }

    pub fn k(&self) -> usize {
        self.t.nrows()
    }

    fn observe<R: Rng>(&self, state: usize, rng: &mut R) -> DVector<f64> {
        let mean = self.o.column(state).clone_owned();
        let Some(n) = self.draws_per_block else { return mean };
        let mut out = DVector::zeros(self.layout.dim());
        for b in 0..self.layout.num_blocks() {
            let range = self.layout.block(b);
            let dist = WeightedIndex::new(mean.rows(range.start, range.len()).iter().copied()).unwrap();
            for _ in 0..n {
                out[range.start + dist.sample(rng)] += 1.0 / n as f64;
            }
        }
        out
    }

    /// Hidden path started from the stationary law, and its observations.
    pub fn sample<R: Rng>(&self, h: usize, rng: &mut R) -> (Vec<usize>, Vec<DVector<f64>>) {
        let mut states = Vec::with_capacity(h);
        let mut cur = WeightedIndex::new(&self.stationary).unwrap().sample(rng);
        let columns: Vec<WeightedIndex<f64>> =
            (0..self.k()).map(|j| WeightedIndex::new(self.t.column(j).iter().copied()).unwrap()).collect();
        for _ in 0..h {
            states.push(cur);
            cur = columns[cur].sample(rng);
        }
        let obs = states.iter().map(|&s| self.observe(s, rng)).collect();
        (states, obs)
    }

    /// Every hidden triple with its stationary probability and noiseless
    /// observations; their weighted moments are the population moments.
    pub fn exact_triples(&self) -> Result<(ObservationStore, Vec<f64>)> {
        let k = self.k();
        let mut store = ObservationStore::new(self.layout.dim());
        let mut weights = Vec::with_capacity(k * k * k);
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for s in [a, b, c] {
                        store.push(&self.o.column(s).clone_owned())?;
                    }
                    weights.push(self.stationary[a] * self.t[(b, a)] * self.t[(c, b)]);
                }
            }
        }
        Ok((store, weights))
    }
}
