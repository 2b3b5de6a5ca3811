use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::TabularMdp;
use crate::ptum::EmpiricalModel;

/// Partition of an observation vector into probability blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return invalid("blocks must be non-empty");
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut dim = 0;
        for &n in &sizes {
            offsets.push(dim);
            dim += n;
        }
        Ok(BlockLayout { sizes, offsets, dim })
    }

    /// `S·A` reward blocks of size `U` followed by `S·A` transition blocks
    /// of size `S`.
    pub fn mdp(num_states: usize, num_actions: usize, support: usize) -> Result<Self> {
        let sa = num_states * num_actions;
        let mut sizes = vec![support; sa];
        sizes.extend(std::iter::repeat(num_states).take(sa));
        Self::new(sizes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }
}

/// How estimates that left the simplex are repaired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimplexRepair {
    /// Clip negatives to zero and renormalize.
    #[default]
    ClipRenormalize,
    /// Euclidean projection onto the simplex.
    Euclidean,
}

/// Clips negative entries and renormalizes; uniform when nothing is left.
pub fn project_simplex(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    let sum: f64 = clipped.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        clipped.iter().map(|x| x / sum).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// Closest probability vector in Euclidean distance.
pub fn project_simplex_euclidean(raw: &[f64]) -> Vec<f64> {
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    raw.iter().map(|&x| (x - theta).max(0.0)).collect()
}

pub(crate) fn repair(raw: &[f64], how: SimplexRepair) -> Vec<f64> {
    match how {
        SimplexRepair::ClipRenormalize => project_simplex(raw),
        SimplexRepair::Euclidean => project_simplex_euclidean(raw),
    }
}

/// Repairs every block of every column in place.
pub(crate) fn project_blocks(o: &mut DMatrix<f64>, layout: &BlockLayout, how: SimplexRepair) {
    for mut col in o.column_iter_mut() {
        for b in 0..layout.num_blocks() {
            let range = layout.block(b);
            let fixed = repair(&col.as_slice()[range.clone()], how);
            col.as_mut_slice()[range].copy_from_slice(&fixed);
        }
    }
}

/// `[vec(q̂); vec(p̂)]` from per-pair empirical distributions.
pub fn vectorize_observation(emp: &EmpiricalModel) -> Result<DVector<f64>> {
    if emp.min_count() == 0 {
        return invalid("every state-action pair needs a sample before vectorizing");
    }
    let (s_n, a_n) = (emp.num_states(), emp.num_actions());
    let mut out = Vec::with_capacity(s_n * a_n * (s_n + emp.support().len()));
    for s in 0..s_n {
        for a in 0..a_n {
            out.extend(emp.reward_dist(s, a));
        }
    }
    for s in 0..s_n {
        for a in 0..a_n {
            out.extend(emp.next_state_dist(s, a));
        }
    }
    Ok(DVector::from_vec(out))
}

/// The same layout built from an exact model.
pub fn vectorize_mdp(mdp: &TabularMdp) -> DVector<f64> {
    let mut out = Vec::with_capacity(mdp.num_pairs() * (mdp.num_states() + mdp.support_size()));
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.extend_from_slice(mdp.q(s, a));
        }
    }
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.extend_from_slice(mdp.p(s, a));
        }
    }
    DVector::from_vec(out)
}

/// Columns are the vectorized models.
pub fn models_matrix(models: &[TabularMdp]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = models.iter().map(vectorize_mdp).collect();
    DMatrix::from_columns(&cols)
}

/// Splits a vector into its flat reward and transition parts.
pub fn unpack(o: &[f64], num_states: usize, num_actions: usize, support: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let split = num_states * num_actions * support;
    if o.len() != split + num_states * num_actions * num_states {
        return Err(Error::ShapeMismatch(format!("vector of length {} does not match the model shape", o.len())));
    }
    Ok((o[..split].to_vec(), o[split..].to_vec()))
}

/// One model per column, after block repair.
pub fn unpack_models(
    o: &DMatrix<f64>,
    num_states: usize,
    num_actions: usize,
    support: &[f64],
    gamma: f64,
) -> Result<Vec<TabularMdp>> {
    let layout = BlockLayout::mdp(num_states, num_actions, support.len())?;
    if o.nrows() != layout.dim() {
        return Err(Error::ShapeMismatch(format!("expected {} rows, got {}", layout.dim(), o.nrows())));
    }
    let mut fixed = o.clone();
    project_blocks(&mut fixed, &layout, SimplexRepair::ClipRenormalize);
    fixed
        .column_iter()
        .map(|col| {
            let (q, p) = unpack(col.as_slice(), num_states, num_actions, support.len())?;
            TabularMdp::new(num_states, num_actions, gamma, support.to_vec(), p, q)
        })
        .collect()
}
