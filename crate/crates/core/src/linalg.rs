//! Dense SVD helpers shared by the solvers.
//!
//! Factorizations come from faer; matrices stay in nalgebra form. Only
//! thin factors are computed, so anything that needs a full null-space
//! basis pads the input to a square matrix first.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values sorted in decreasing order.
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn svd_sorted(m: &DMatrix<f64>) -> SortedSvd {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return SortedSvd {
            u: DMatrix::zeros(r, 0),
            s: Vec::new(),
            v: DMatrix::zeros(c, 0),
        };
    }
    let fm = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    SortedSvd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&q| s[q]).collect(),
        v: DMatrix::from_fn(c, k, |i, j| v[(i, order[j])]),
    }
}

/// Eigenvalue moduli of a square matrix.
pub(crate) fn eigenvalue_moduli(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    fm.eigenvalues()
        .expect("eigen decomposition of a finite matrix converges")
        .iter()
        .map(|z| z.norm())
        .collect()
}

/// Relative rank threshold used throughout: `rel * max(1, sigma_max)`.
pub(crate) fn rank_tol(s: &[f64], rel: f64) -> f64 {
    rel * s.first().copied().unwrap_or(0.0).max(1.0)
}

pub(crate) fn rank_of(s: &[f64], tol: f64) -> usize {
    s.iter().take_while(|&&x| x > tol).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub(crate) fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    let padded;
    let src = if r < c {
        padded = {
            let mut p = DMatrix::zeros(c, c);
            p.view_mut((0, 0), (r, c)).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };
    let svd = svd_sorted(src);
    let tol = rank_tol(&svd.s, rel_tol);
    let rank = rank_of(&svd.s, tol);
    svd.v.columns(rank, c - rank).into_owned()
}

/// Orthonormal basis (as rows) of the row space of `m`.
pub(crate) fn row_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(0, c);
    }
    let svd = svd_sorted(m);
    let tol = rank_tol(&svd.s, rel_tol);
    let rank = rank_of(&svd.s, tol);
    svd.v.columns(0, rank).transpose()
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
/// Returns the inverse and the numerical rank.
pub(crate) fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), 0);
    }
    let svd = svd_sorted(m);
    let tol = rank_tol(&svd.s, rel_tol);
    let rank = rank_of(&svd.s, tol);
    let mut out = DMatrix::zeros(c, r);
    for k in 0..rank {
        out += (svd.v.column(k) * svd.u.column(k).transpose()) / svd.s[k];
    }
    (out, rank)
}

/// Numerical rank with the given relative cutoff.
pub fn matrix_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = svd_sorted(m);
    rank_of(&svd.s, rank_tol(&svd.s, rel_tol))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Rows/columns selected by index lists.
pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn vstack(blocks: &[&DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub(crate) fn hstack(blocks: &[&DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}
