use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observations kept as coordinates in an orthonormal basis of their span,
/// which is far smaller than the ambient dimension when few tasks are seen.
#[derive(Debug, Clone)]
pub struct ObservationStore {
    dim: usize,
    basis: Vec<DVector<f64>>,
    coords: Vec<Vec<f64>>,
}

impl ObservationStore {
    pub fn new(dim: usize) -> Self {
        ObservationStore { dim, basis: vec![], coords: vec![] }
    }

    pub fn from_observations(dim: usize, obs: &[DVector<f64>]) -> Result<Self> {
        let mut store = Self::new(dim);
        for o in obs {
            store.push(o)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn push(&mut self, o: &DVector<f64>) -> Result<()> {
        if o.len() != self.dim {
            return Err(Error::ShapeMismatch(format!("observation of length {} in a store of dimension {}", o.len(), self.dim)));
        }
        let mut residual = o.clone();
        let mut c = vec![0.0; self.basis.len()];
        // Two passes keep the basis orthonormal to working precision.
        for _ in 0..2 {
            for (ci, b) in c.iter_mut().zip(&self.basis) {
                let x = b.dot(&residual);
                *ci += x;
                residual.axpy(-x, b, 1.0);
            }
        }
        let norm = residual.norm();
        if norm > 1e-10 * o.norm().max(f64::MIN_POSITIVE) {
            self.basis.push(residual / norm);
            c.push(norm);
        }
        self.coords.push(c);
        Ok(())
    }

    /// `d × r` basis matrix.
    pub fn basis(&self) -> DMatrix<f64> {
        if self.basis.is_empty() {
            return DMatrix::zeros(self.dim, 0);
        }
        DMatrix::from_columns(&self.basis)
    }

    /// Coordinates of the observations `start, start + step, ...` (at most
    /// `count`), one row each.
    pub fn coords(&self, start: usize, step: usize, count: usize) -> DMatrix<f64> {
        let r = self.rank();
        let rows: Vec<usize> = (0..count).map(|l| start + l * step).filter(|&i| i < self.len()).collect();
        DMatrix::from_fn(rows.len(), r, |i, j| self.coords[rows[i]].get(j).copied().unwrap_or(0.0))
    }

    /// Reconstructed observation `i`.
    pub fn observation(&self, i: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (c, b) in self.coords[i].iter().zip(&self.basis) {
            out.axpy(*c, b, 1.0);
        }
        out
    }
}
