use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::assign::hungarian;
use super::layout::{project_blocks, repair, BlockLayout, SimplexRepair};
use super::linalg::{column_norm_diff, pinv};
use super::{estimate_moments, rtp_decompose, MomentSet, ObservationStore, RtpParams, Whitening};
use crate::error::{Error, Result};

/// Estimated observation means `Ô` (one column per hidden state), hidden
/// transitions `T̂` with `T̂[i][j] = P(next = i | current = j)`, and the
/// tensor eigenpairs they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmEstimate {
    pub o: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub mu3: DMatrix<f64>,
    pub lambda: Vec<f64>,
    /// Whitened eigenvectors, one per column.
    pub eigvecs: DMatrix<f64>,
    /// `λ⁻²`, normalized to sum to one.
    pub omega: Vec<f64>,
    /// Column `j` is column `permutation[j]` of the raw decomposition.
    pub permutation: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HmmDocument {
    #[serde(rename = "O")]
    o: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    t: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    omega: Vec<f64>,
    permutation: Vec<usize>,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_columns(cols: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows = cols.first().map_or(0, Vec::len);
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::ShapeMismatch("ragged columns".into()));
    }
    Ok(DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]))
}

/// `(raw, normalized)` mixing weights `λ⁻²`.
pub fn omega_from_lambda(lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let raw: Vec<f64> = lambda.iter().map(|l| 1.0 / (l * l)).collect();
    let sum: f64 = raw.iter().sum();
    let norm = raw.iter().map(|x| x / sum).collect();
    (raw, norm)
}

impl HmmEstimate {
    pub fn k(&self) -> usize {
        self.t.nrows()
    }

    /// Reorders hidden states so that new column `j` is old column `perm[j]`.
    pub fn permute(&mut self, perm: &[usize]) {
        let k = self.k();
        assert_eq!(perm.len(), k);
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), k, |r, c| m[(r, perm[c])]);
        self.o = pick(&self.o);
        self.mu3 = pick(&self.mu3);
        self.eigvecs = pick(&self.eigvecs);
        let t = &self.t;
        self.t = DMatrix::from_fn(k, k, |r, c| t[(perm[r], perm[c])]);
        self.lambda = perm.iter().map(|&i| self.lambda[i]).collect();
        self.omega = perm.iter().map(|&i| self.omega[i]).collect();
        self.permutation = perm.iter().map(|&i| self.permutation[i]).collect();
    }

    /// Serializes `O` and `T` column-major with the spectral weights.
    pub fn to_json(&self) -> Result<String> {
        let doc = HmmDocument {
            o: columns(&self.o),
            t: columns(&self.t),
            lambda: self.lambda.clone(),
            omega: self.omega.clone(),
            permutation: self.permutation.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Inverse of [`HmmEstimate::to_json`]; `μ₃` is rebuilt as `O T` and the
    /// eigenvectors are not stored.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: HmmDocument = serde_json::from_str(s)?;
        let o = from_columns(&doc.o)?;
        let t = from_columns(&doc.t)?;
        let k = t.ncols();
        if o.ncols() != k || t.nrows() != k || doc.lambda.len() != k || doc.omega.len() != k || doc.permutation.len() != k {
            return Err(Error::ShapeMismatch("estimate fields disagree on the number of states".into()));
        }
        Ok(HmmEstimate {
            mu3: &o * &t,
            o,
            t,
            lambda: doc.lambda,
            eigvecs: DMatrix::identity(k, k),
            omega: doc.omega,
            permutation: doc.permutation,
        })
    }
}

/// Means of the third view, `Ô` and `T̂` from tensor eigenpairs.
pub fn recover_parameters(
    moments: &MomentSet,
    wh: &Whitening,
    pairs: &[(f64, DVector<f64>)],
    layout: &BlockLayout,
    how: SimplexRepair,
) -> Result<HmmEstimate> {
    let k = pairs.len();
    if layout.dim() != moments.dim() {
        return Err(Error::ShapeMismatch(format!("layout has {} entries, observations {}", layout.dim(), moments.dim())));
    }
    // (Wᵀ)† = D Λ^{1/2}
    let mut unwhiten = wh.d.clone();
    for (mut c, &l) in unwhiten.column_iter_mut().zip(&wh.eigenvalues) {
        c *= l.sqrt();
    }
    let mut mu = DMatrix::zeros(unwhiten.nrows(), k);
    let mut eigvecs = DMatrix::zeros(k, k);
    for (j, (l, v)) in pairs.iter().enumerate() {
        mu.set_column(j, &(&unwhiten * v * *l));
        eigvecs.set_column(j, v);
    }
    let o_coords = moments.second_view_means(&mu);
    let (o_pinv, rank) = pinv(&o_coords);
    if rank < k {
        return Err(Error::DegenerateMoments(format!("observation means have rank {rank} < {k}")));
    }
    let mut t = o_pinv * &mu;
    for mut c in t.column_iter_mut() {
        let fixed = repair(c.as_slice(), how);
        c.as_mut_slice().copy_from_slice(&fixed);
    }
    let mut o = moments.lift_columns(&o_coords);
    project_blocks(&mut o, layout, how);
    let lambda: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    Ok(HmmEstimate {
        o,
        t,
        mu3: moments.lift_columns(&mu),
        omega: omega_from_lambda(&lambda).1,
        lambda,
        eigvecs,
        permutation: (0..k).collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    #[serde(default)]
    pub rtp: RtpParams,
    #[serde(default)]
    pub repair: SimplexRepair,
}

/// Moments, whitening, tensor decomposition and recovery in one call.
pub fn learn_hmm<R: Rng>(
    store: &ObservationStore,
    k: usize,
    layout: &BlockLayout,
    params: &SpectralParams,
    rng: &mut R,
) -> Result<HmmEstimate> {
    let moments = estimate_moments(store, k)?;
    learn_from_moments(&moments, layout, params, rng)
}

pub fn learn_from_moments<R: Rng>(moments: &MomentSet, layout: &BlockLayout, params: &SpectralParams, rng: &mut R) -> Result<HmmEstimate> {
    let wh = moments.whitening()?;
    let tensor = moments.whitened_m3(&wh);
    let pairs = rtp_decompose(&tensor, moments.k(), &params.rtp, rng)?;
    recover_parameters(moments, &wh, &pairs, layout, params.repair)
}

/// Permutation `π` minimizing `Σⱼ ‖new[:, π(j)] − reference[:, j]‖₂`.
pub fn align_columns(new: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<Vec<usize>> {
    if new.shape() != reference.shape() {
        return Err(Error::ShapeMismatch(format!("cannot align {:?} with {:?}", new.shape(), reference.shape())));
    }
    let k = new.ncols();
    let cost: Vec<Vec<f64>> = (0..k).map(|j| (0..k).map(|i| column_norm_diff(new, i, reference, j)).collect()).collect();
    Ok(hungarian(&cost))
}

/// Largest column error of `est` against `truth` after alignment.
pub fn max_column_error(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    let perm = align_columns(est, truth)?;
    Ok(perm.iter().enumerate().map(|(j, &i)| column_norm_diff(est, i, truth, j)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::spectral::SyntheticHmm;
    use rand::Rng;

    #[test]
    fn omega_example() {
        let (raw, norm) = omega_from_lambda(&[2.0, 1.0]);
        assert_eq!(raw, vec![0.25, 1.0]);
        assert!((norm[0] - 0.2).abs() < 1e-15 && (norm[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn exact_moments_recover_parameters() {
        let mut rng = stream(11, Stream::Synthetic);
        for k in [2, 3] {
            let hmm = SyntheticHmm::random(k, &[4, 4, 3], None, &mut rng).unwrap();
            let (store, weights) = hmm.exact_triples().unwrap();
            let moments = crate::spectral::estimate_moments_weighted(&store, &weights, k).unwrap();

            // M₂ = Σⱼ ωⱼ μ₃ⱼ μ₃ⱼᵀ with μ₃ = O T.
            let mu = &hmm.o * &hmm.t;
            let mut m2 = DMatrix::zeros(hmm.o.nrows(), hmm.o.nrows());
            for j in 0..k {
                m2 += mu.column(j) * mu.column(j).transpose() * hmm.stationary[j];
            }
            assert!((moments.m2() - m2).norm() < 1e-9);

            let mut est = learn_from_moments(&moments, &hmm.layout, &SpectralParams::default(), &mut rng).unwrap();
            let perm = align_columns(&est.o, &hmm.o).unwrap();
            est.permute(&perm);
            assert!((&est.o - &hmm.o).abs().max() < 1e-6);
            assert!((&est.t - &hmm.t).abs().max() < 1e-6);
            for (w, p) in est.omega.iter().zip(&hmm.stationary) {
                assert!((w - p).abs() < 1e-6);
            }
            for c in est.t.column_iter() {
                assert!((c.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_second_moment_close() {
        let mut rng = stream(12, Stream::Synthetic);
        let hmm = SyntheticHmm::random(2, &[3, 3], None, &mut rng).unwrap();
        let obs = hmm.sample(300_000, &mut rng).1;
        let store = ObservationStore::from_observations(6, &obs).unwrap();
        let moments = estimate_moments(&store, 2).unwrap();
        let mu = &hmm.o * &hmm.t;
        let mut m2 = DMatrix::zeros(6, 6);
        for j in 0..2 {
            m2 += mu.column(j) * mu.column(j).transpose() * hmm.stationary[j];
        }
        assert!((moments.m2() - m2).svd(false, false).singular_values.max() < 0.02);
    }

    #[test]
    fn estimates_are_distributions() {
        let mut rng = stream(13, Stream::Synthetic);
        let hmm = SyntheticHmm::random(3, &[5, 5], Some(10), &mut rng).unwrap();
        let obs = hmm.sample(300, &mut rng).1;
        let store = ObservationStore::from_observations(10, &obs).unwrap();
        let est = learn_hmm(&store, 3, &hmm.layout, &SpectralParams::default(), &mut rng).unwrap();
        for c in est.t.column_iter().chain(est.o.column_iter()) {
            assert!(c.iter().all(|&x| x >= 0.0));
        }
        for c in est.o.column_iter() {
            for b in 0..2 {
                assert!((c.rows(5 * b, 5).sum() - 1.0).abs() < 1e-12);
            }
        }
        assert!(est.omega.iter().all(|&w| w > 0.0));
        let back = HmmEstimate::from_json(&est.to_json().unwrap()).unwrap();
        assert_eq!(back.o, est.o);
        assert_eq!(back.t, est.t);
        assert_eq!(back.permutation, est.permutation);
    }

    #[test]
    fn alignment_examples() {
        let mut rng = stream(14, Stream::Synthetic);
        let o = DMatrix::from_fn(6, 4, |_, _| rng.random::<f64>());
        assert_eq!(align_columns(&o, &o).unwrap(), vec![0, 1, 2, 3]);
        let swapped = DMatrix::from_fn(6, 4, |r, c| o[(r, [1, 0, 2, 3][c])]);
        assert_eq!(align_columns(&swapped, &o).unwrap(), vec![1, 0, 2, 3]);
        assert!(align_columns(&o, &DMatrix::zeros(5, 4)).is_err());
    }

    #[test]
    fn alignment_recovers_planted_permutation() {
        let mut rng = stream(15, Stream::Synthetic);
        let mut hits = 0;
        for _ in 0..100 {
            let hmm = SyntheticHmm::random(5, &[6, 6], None, &mut rng).unwrap();
            let mut planted: Vec<usize> = (0..5).collect();
            for i in (1..5).rev() {
                planted.swap(i, rng.random_range(0..=i));
            }
            let noisy = DMatrix::from_fn(12, 5, |r, c| {
                hmm.o[(r, planted[c])] + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            // Column planted[j] of truth sits at position j of `noisy`.
            let perm = align_columns(&noisy, &hmm.o).unwrap();
            if (0..5).all(|j| planted[perm[j]] == j) {
                hits += 1;
            }
        }
        assert!(hits >= 99, "{hits}");
    }

    #[test]
    fn permutation_invariant_cost() {
        let mut rng = stream(16, Stream::Synthetic);
        let a = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        let cost = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let p = align_columns(x, y).unwrap();
            p.iter().enumerate().map(|(j, &i)| column_norm_diff(x, i, y, j)).sum::<f64>()
        };
        let sigma = [2, 0, 1];
        let pa = DMatrix::from_fn(5, 3, |r, c| a[(r, sigma[c])]);
        let pb = DMatrix::from_fn(5, 3, |r, c| b[(r, sigma[c])]);
        assert!((cost(&a, &b) - cost(&pa, &pb)).abs() < 1e-12);
    }

    #[test]
    fn permute_composes() {
        let mut rng = stream(17, Stream::Synthetic);
        let hmm = SyntheticHmm::random(3, &[4], None, &mut rng).unwrap();
        let (store, w) = hmm.exact_triples().unwrap();
        let moments = crate::spectral::estimate_moments_weighted(&store, &w, 3).unwrap();
        let est = learn_from_moments(&moments, &hmm.layout, &SpectralParams::default(), &mut rng).unwrap();
        let mut e = est.clone();
        e.permute(&[1, 2, 0]);
        e.permute(&[2, 0, 1]);
        assert_eq!(e, est);
    }
}
