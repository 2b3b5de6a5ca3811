use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dense `k × k × k` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    k: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(k: usize) -> Self {
        Tensor3 { k, data: vec![0.0; k * k * k] }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    fn at(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.k + j) * self.k + l
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[self.at(i, j, l)]
    }

    /// `self += w · a⊗b⊗c`.
    pub fn add_outer(&mut self, w: f64, a: &[f64], b: &[f64], c: &[f64]) {
        let k = self.k;
        for i in 0..k {
            let wa = w * a[i];
            for j in 0..k {
                let wab = wa * b[j];
                let row = &mut self.data[(i * k + j) * k..(i * k + j + 1) * k];
                for (x, cl) in row.iter_mut().zip(c) {
                    *x += wab * cl;
                }
            }
        }
    }

    /// Average over the six index permutations.
    pub fn symmetrize(&self) -> Tensor3 {
        let k = self.k;
        let mut out = Tensor3::zeros(k);
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let s = self.get(i, j, l)
                        + self.get(i, l, j)
                        + self.get(j, i, l)
                        + self.get(j, l, i)
                        + self.get(l, i, j)
                        + self.get(l, j, i);
                    let idx = out.at(i, j, l);
                    out.data[idx] = s / 6.0;
                }
            }
        }
        out
    }

    /// `T(I, v, v)`.
    pub fn contract_two(&self, v: &[f64]) -> Vec<f64> {
        let k = self.k;
        (0..k)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..k {
                    let row = &self.data[(i * k + j) * k..(i * k + j + 1) * k];
                    acc += v[j] * row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
                }
                acc
            })
            .collect()
    }

    /// `T(v, v, v)`.
    pub fn contract_all(&self, v: &[f64]) -> f64 {
        self.contract_two(v).iter().zip(v).map(|(x, y)| x * y).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtpParams {
    pub restarts: usize,
    pub iters: usize,
    /// Power iterations stop once a step moves the vector less than this.
    pub tol: f64,
}

impl Default for RtpParams {
    fn default() -> Self {
        RtpParams { restarts: 100, iters: 100, tol: 1e-13 }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn power_iterate(t: &Tensor3, mut v: Vec<f64>, iters: usize, tol: f64) -> Vec<f64> {
    for _ in 0..iters {
        let mut next = t.contract_two(&v);
        if normalize(&mut next) == 0.0 {
            return v;
        }
        let moved = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = next;
        if moved < tol {
            break;
        }
    }
    v
}

/// Robust tensor power method with deflation. Returns `k` pairs with
/// positive eigenvalues, in extraction order.
pub fn rtp_decompose<R: Rng>(t: &Tensor3, k: usize, params: &RtpParams, rng: &mut R) -> Result<Vec<(f64, DVector<f64>)>> {
    if params.restarts == 0 || params.iters == 0 || k == 0 || k > t.dim() {
        return invalid("need k in 1..=dim and at least one restart and iteration");
    }
    let scale = t.norm();
    if !(scale > 0.0) {
        return Err(Error::DecompositionFailed(0));
    }
    let n = t.dim();
    let mut work = t.clone();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..params.restarts {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut v);
            let mut v = power_iterate(&work, v, params.iters, params.tol);
            let mut lambda = work.contract_all(&v);
            if lambda < 0.0 {
                lambda = -lambda;
                v.iter_mut().for_each(|x| *x = -*x);
            }
            if best.as_ref().is_none_or(|(l, _)| lambda > *l) {
                best = Some((lambda, v));
            }
        }
        let (_, v) = best.unwrap();
        let mut v = power_iterate(&work, v, params.iters, params.tol);
        let mut lambda = work.contract_all(&v);
        if lambda < 0.0 {
            lambda = -lambda;
            v.iter_mut().for_each(|x| *x = -*x);
        }
        if !(lambda > 1e-12 * scale) {
            return Err(Error::DecompositionFailed(j));
        }
        work.add_outer(-lambda, &v, &v, &v);
        out.push((lambda, DVector::from_vec(v)));
    }
    Ok(out)
}
