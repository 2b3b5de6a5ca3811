use nalgebra::{DMatrix, DVector};

use super::linalg::{top_k_cross, top_k_eigen};
use super::{ObservationStore, Tensor3};
use crate::error::{invalid, Error, Result};

/// Multi-view moments of consecutive disjoint triples, kept in low-rank
/// factored form in the span of the observations.
///
/// With `Σᵢⱼ = (1/m) Σₗ oᵢₗ⊗oⱼₗ`, the first two views are mapped onto the
/// third: `õ₁ = C₁ U₁₂ᵀ o₁`, `õ₂ = C₂ V₁₂ᵀ o₂`, where `U₁₂ S₁₂ V₁₂ᵀ` is the
/// rank-`k` truncation of `Σ₁₂`.
#[derive(Debug, Clone)]
pub struct MomentSet {
    k: usize,
    m: usize,
    basis: DMatrix<f64>,
    views: [DMatrix<f64>; 3],
    /// Rows of `views` scaled by `sqrt(m·wₗ)`, so plain cross products give
    /// weighted moments.
    scaled: [DMatrix<f64>; 3],
    weights: Vec<f64>,
    u12: DMatrix<f64>,
    s12: Vec<f64>,
    v12: DMatrix<f64>,
    u31: DMatrix<f64>,
    s31: Vec<f64>,
    v31: DMatrix<f64>,
    c1: DMatrix<f64>,
    c2: DMatrix<f64>,
}

/// Whitening in the coordinates of the observation span: `W = D Λ^{-1/2}`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub w: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

fn scale_columns(m: DMatrix<f64>, s: &[f64], power: f64) -> DMatrix<f64> {
    let mut m = m;
    for (mut c, &x) in m.column_iter_mut().zip(s) {
        c *= x.powf(power);
    }
    m
}

/// Moments of the triples `(o₃ₗ, o₃ₗ₊₁, o₃ₗ₊₂)`; trailing observations are
/// dropped.
pub fn estimate_moments(store: &ObservationStore, k: usize) -> Result<MomentSet> {
    let m = store.len() / 3;
    estimate_moments_weighted(store, &vec![1.0 / m.max(1) as f64; m], k)
}

/// Same, with triple `l` weighted by `weights[l]` (summing to one).
pub fn estimate_moments_weighted(store: &ObservationStore, weights: &[f64], k: usize) -> Result<MomentSet> {
    let m = weights.len();
    if m == 0 || store.len() < 3 * m {
        return invalid("need at least three observations per triple");
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("triple weights must be a probability vector");
    }
    let views = [store.coords(0, 3, m), store.coords(1, 3, m), store.coords(2, 3, m)];
    let scaled = views.clone().map(|mut x| {
        for (mut row, &w) in x.row_iter_mut().zip(weights) {
            row *= (m as f64 * w).sqrt();
        }
        x
    });
    let inv_m = 1.0 / m as f64;
    let (u12, s12, v12) = top_k_cross(&scaled[0], &scaled[1], k)?;
    let (u31, s31, v31) = top_k_cross(&scaled[2], &scaled[0], k)?;
    let c1 = scale_columns(scaled[2].transpose() * (&scaled[1] * &v12), &s12, -1.0) * inv_m;
    let c2 = scale_columns(scaled[2].transpose() * (&scaled[0] * &u12), &s12, -1.0) * inv_m;
    Ok(MomentSet {
        k,
        m,
        basis: store.basis(),
        views,
        scaled,
        weights: weights.to_vec(),
        u12,
        s12,
        v12,
        u31,
        s31,
        v31,
        c1,
        c2,
    })
}

impl MomentSet {
    pub fn num_triples(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    fn lift(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * coords * self.basis.transpose()
    }

    /// `Σᵢⱼ` in the ambient space, views numbered from 1.
    pub fn covariance(&self, i: usize, j: usize) -> DMatrix<f64> {
        let c = self.scaled[i - 1].transpose() * &self.scaled[j - 1] / self.m as f64;
        self.lift(&c)
    }

    fn m2_coords(&self) -> DMatrix<f64> {
        let m = &self.c1 * DMatrix::from_diagonal(&DVector::from_column_slice(&self.s12)) * self.c2.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// Symmetrized `M₂ = (1/m) Σ õ₁⊗õ₂` in the ambient space.
    pub fn m2(&self) -> DMatrix<f64> {
        self.lift(&self.m2_coords())
    }

    /// Whitening of `M₂` computed on the `2k` columns that span it.
    pub fn whitening(&self) -> Result<Whitening> {
        let k = self.k;
        let r = self.c1.nrows();
        let mut stacked = DMatrix::zeros(r, 2 * k);
        stacked.columns_mut(0, k).copy_from(&self.c1);
        stacked.columns_mut(k, k).copy_from(&self.c2);
        let qr = stacked.qr();
        let (q, rr) = (qr.q(), qr.r());
        let mut mid = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            mid[(i, k + i)] = 0.5 * self.s12[i];
            mid[(k + i, i)] = 0.5 * self.s12[i];
        }
        let small = &rr * mid * rr.transpose();
        let small = (&small + small.transpose()) * 0.5;
        let (e, lambda) = top_k_eigen(&small, k)?;
        let d = q * e;
        let w = scale_columns(d.clone(), &lambda, -0.5);
        Ok(Whitening { w, d, eigenvalues: lambda })
    }

    /// `W` in the ambient space.
    pub fn lift_columns(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * coords
    }

    /// Symmetrized `Σₗ wₗ (Wᵀõ₁)⊗(Wᵀõ₂)⊗(Wᵀo₃)`.
    pub fn whitened_m3(&self, wh: &Whitening) -> Tensor3 {
        let wt = wh.w.transpose();
        let a = &self.views[0] * &self.u12 * (&wt * &self.c1).transpose();
        let b = &self.views[1] * &self.v12 * (&wt * &self.c2).transpose();
        let c = &self.views[2] * &wh.w;
        let mut t = Tensor3::zeros(self.k);
        for (l, &w) in self.weights.iter().enumerate() {
            let row = |x: &DMatrix<f64>| x.row(l).iter().copied().collect::<Vec<f64>>();
            t.add_outer(w, &row(&a), &row(&b), &row(&c));
        }
        t.symmetrize()
    }

    /// Maps third-view means to second-view means: `Σ₂₁ Σ₃₁† μ` for each
    /// column of `mu` (coordinates).
    pub(crate) fn second_view_means(&self, mu: &DMatrix<f64>) -> DMatrix<f64> {
        let left = scale_columns(self.scaled[1].transpose() * (&self.scaled[0] * &self.v31), &self.s31, -1.0);
        left * (self.u31.transpose() * mu) / self.m as f64
    }
}

/// Generic whitening of a symmetric matrix with `k` positive eigenvalues.
pub fn whiten(m2: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if m2.nrows() != m2.ncols() {
        return Err(Error::ShapeMismatch("second moment must be square".into()));
    }
    let (d, lambda) = top_k_eigen(&((m2 + m2.transpose()) * 0.5), k)?;
    Ok(scale_columns(d, &lambda, -0.5))
}
