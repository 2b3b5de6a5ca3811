use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular value cutoff for pseudo-inverses and rank checks.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD with singular values sorted in decreasing order.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (u, s, v)
}

/// Moore-Penrose pseudo-inverse and the numerical rank it used.
pub fn pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    if m.is_empty() {
        return (DMatrix::zeros(m.ncols(), m.nrows()), 0);
    }
    let (u, s, v) = sorted_svd(m);
    let cut = RANK_TOL * s.first().copied().unwrap_or(0.0);
    let rank = s.iter().take_while(|&&x| x > cut && x > 0.0).count();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for i in 0..rank {
        out += (v.column(i) / s[i]) * u.column(i).transpose();
    }
    (out, rank)
}

/// Top-`k` singular triple of `aᵀb / m` where `a` and `b` hold one
/// observation per row. Works on a core no larger than `min(m, r)`.
pub(crate) fn top_k_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, r) = a.shape();
    let scale = 1.0 / m as f64;
    let (u, s, v) = if m >= r {
        sorted_svd(&((a.transpose() * b) * scale))
    } else {
        let qa = a.transpose().qr();
        let qb = b.transpose().qr();
        let core = qa.r() * qb.r().transpose() * scale;
        let (cu, cs, cv) = sorted_svd(&core);
        (qa.q() * cu, cs, qb.q() * cv)
    };
    if s.len() < k || k == 0 {
        return Err(Error::DegenerateMoments(format!("need rank {k}, have {} directions", s.len())));
    }
    if !(s[k - 1] > RANK_TOL * s[0]) {
        return Err(Error::DegenerateMoments(format!("cross moment has rank below {k}")));
    }
    Ok((u.columns(0, k).into_owned(), s[..k].to_vec(), v.columns(0, k).into_owned()))
}

/// Top-`k` eigenpairs of a symmetric matrix, largest first.
pub(crate) fn top_k_eigen(m: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map(|&i| eig.eigenvalues[i]).unwrap_or(0.0);
    let found = order.iter().take_while(|&&i| eig.eigenvalues[i] > RANK_TOL * top && eig.eigenvalues[i] > 0.0).count();
    if found < k {
        return Err(Error::RankDeficient { found, needed: k });
    }
    let vecs = DMatrix::from_fn(m.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vecs, order[..k].iter().map(|&i| eig.eigenvalues[i]).collect()))
}

pub(crate) fn column_norm_diff(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (a.column(i) - b.column(j)).norm()
}
