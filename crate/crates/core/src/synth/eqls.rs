//! Dense kernel for `minimize ||G x - h||^2 subject to E x = f`.
//!
//! Null-space method: `x = x_p + Z y` where `x_p = E^+ f` is the
//! minimum-norm (least-squares) particular solution and `Z` spans
//! `null(E)`. The reduced problem `min ||G Z y - (h - G x_p)||` is solved
//! with a pseudo-inverse, so `y` is minimum-norm too. Because `x_p` is
//! orthogonal to `range(Z)`, the returned `x` is the minimum-norm
//! minimizer over the feasible set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlsError};
use crate::linalg::{max_abs_vec, null_space, pinv};

/// Equality residual above which a system `E x = f` is reported infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EqLsSolution {
    pub x: DVector<f64>,
    /// `max |E x - f|`.
    pub eq_residual: f64,
    pub feasible: bool,
    /// Redundant equality rows or a non-unique minimizer.
    pub degenerate: bool,
    pub rank_e: usize,
    pub objective: f64,
}

pub fn solve_eq_ls(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    e: &DMatrix<f64>,
    f: &DVector<f64>,
) -> Result<EqLsSolution> {
    let k = g.ncols().max(e.ncols());
    if (g.nrows() > 0 && g.ncols() != k) || (e.nrows() > 0 && e.ncols() != k) {
        return Err(SlsError::Dimension(format!(
            "G has {} columns, E has {}",
            g.ncols(),
            e.ncols()
        )));
    }
    if g.nrows() != h.len() || e.nrows() != f.len() {
        return Err(SlsError::Dimension(format!(
            "G {}x{} with h of length {}, E {}x{} with f of length {}",
            g.nrows(),
            g.ncols(),
            h.len(),
            e.nrows(),
            e.ncols(),
            f.len()
        )));
    }
    let g = if g.nrows() == 0 { DMatrix::zeros(0, k) } else { g.clone() };
    let e = if e.nrows() == 0 { DMatrix::zeros(0, k) } else { e.clone() };

    let (e_pinv, rank_e) = pinv(&e, RANK_REL_TOL);
    let x_p = &e_pinv * f;
    let z = null_space(&e, RANK_REL_TOL);

    let mut degenerate = rank_e < e.nrows();
    let x = if z.ncols() > 0 && g.nrows() > 0 {
        let gz = &g * &z;
        let rhs = h - &g * &x_p;
        let (gz_pinv, rank_gz) = pinv(&gz, RANK_REL_TOL);
        if rank_gz < z.ncols() {
            degenerate = true;
        }
        let y = gz_pinv * rhs;
        &x_p + &z * y
    } else {
        x_p
    };

    let eq_residual = if e.nrows() > 0 {
        max_abs_vec(&(&e * &x - f))
    } else {
        0.0
    };
    let objective = if g.nrows() > 0 {
        (&g * &x - h).norm_squared()
    } else {
        0.0
    };
    Ok(EqLsSolution {
        x,
        eq_residual,
        feasible: eq_residual <= FEASIBILITY_TOL,
        degenerate,
        rank_e,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unconstrained_identity() {
        let sol = solve_eq_ls(
            &DMatrix::identity(3, 3),
            &DVector::zeros(3),
            &DMatrix::zeros(0, 3),
            &DVector::zeros(0),
        )
        .unwrap();
        assert_eq!(sol.x, DVector::zeros(3));
        assert!(sol.feasible);
    }

    #[test]
    fn projection_onto_line() {
        let sol = solve_eq_ls(
            &DMatrix::identity(2, 2),
            &DVector::zeros(2),
            &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-14);
        assert!(!sol.degenerate);
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let e = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let f = DVector::from_vec(vec![0.0, 1.0]);
        let sol = solve_eq_ls(&DMatrix::zeros(0, 1), &DVector::zeros(0), &e, &f).unwrap();
        assert!(!sol.feasible);
        assert_abs_diff_eq!(sol.eq_residual, 0.5, epsilon = 1e-12);
        assert!(sol.degenerate);
    }

    #[test]
    fn agrees_with_kkt_factorizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (k, p, m) = (20, 30, 6);
            let g = DMatrix::from_fn(p, k, |_, _| rng.gen_range(-1.0..1.0));
            let h = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let e = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
            let f = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let sol = solve_eq_ls(&g, &h, &e, &f).unwrap();

            // [2 G'G  E'] [x]   [2 G'h]
            // [E      0 ] [l] = [f    ]
            let mut kkt = DMatrix::zeros(k + m, k + m);
            kkt.view_mut((0, 0), (k, k)).copy_from(&(g.transpose() * &g * 2.0));
            kkt.view_mut((0, k), (k, m)).copy_from(&e.transpose());
            kkt.view_mut((k, 0), (m, k)).copy_from(&e);
            let mut rhs = DVector::zeros(k + m);
            rhs.rows_mut(0, k).copy_from(&(g.transpose() * &h * 2.0));
            rhs.rows_mut(k, m).copy_from(&f);

            let lu = kkt.clone().full_piv_lu().solve(&rhs).unwrap();
            let qr = kkt.qr().solve(&rhs).unwrap();
            assert!((lu.rows(0, k) - &sol.x).amax() < 1e-9);
            assert!((qr.rows(0, k) - &sol.x).amax() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let r = solve_eq_ls(
            &DMatrix::identity(2, 2),
            &DVector::zeros(3),
            &DMatrix::zeros(0, 2),
            &DVector::zeros(0),
        );
        assert!(matches!(r, Err(SlsError::Dimension(_))));
    }
}
