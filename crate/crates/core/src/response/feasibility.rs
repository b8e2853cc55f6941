//! Finite-horizon achievability: does any FIR response of horizon `T` exist?

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{FirMatrix, SystemResponse};
use crate::error::{check_dims, Result, SlsError};
use crate::linalg::{hstack, matrix_rank, max_abs};
use crate::synth::column::{ColumnData, ColumnPattern, StagedPass};
use crate::synth::eqls::FEASIBILITY_TOL;

#[derive(Debug, Clone)]
pub struct Feasibility {
    pub feasible: bool,
    /// Largest column defect of the best attempt.
    pub residual: f64,
    /// `{R, M}` meeting the constraints, when feasible.
    pub witness: Option<SystemResponse>,
}

/// Estimator-side response `{R, N}` with
/// `R[t+1] = R[t] A + N[t] C2`, `R[1] = I`, `R[T+1] = 0`.
#[derive(Debug, Clone)]
pub struct EstimationWitness {
    pub r: FirMatrix,
    pub n: FirMatrix,
}

impl EstimationWitness {
    /// Max-entry defect of `R[0] = 0`, `R[1] = I`,
    /// `R[t+1] = R[t] A + N[t] C2`, and `N[0] = 0`.
    pub fn residual(&self, a: &DMatrix<f64>, c2: &DMatrix<f64>) -> Result<f64> {
        let n = a.nrows();
        check_dims("R", self.r.shape(), (n, n))?;
        check_dims("N", self.n.shape(), (n, c2.nrows()))?;
        check_dims("C2", c2.shape(), (c2.nrows(), n))?;
        let h = self.r.horizon().max(self.n.horizon());
        let mut worst = max_abs(&self.r.coeff(0))
            .max(max_abs(&self.n.coeff(0)))
            .max(max_abs(&(self.r.coeff(1) - DMatrix::identity(n, n))));
        for t in 1..=h {
            let d = self.r.coeff(t + 1) - self.r.coeff(t) * a - self.n.coeff(t) * c2;
            worst = worst.max(max_abs(&d));
        }
        Ok(worst)
    }
}

fn solve_columns(a: &DMatrix<f64>, b2: &DMatrix<f64>, horizon: usize) -> Result<(f64, FirMatrix, FirMatrix)> {
    let n = a.nrows();
    let nu = b2.ncols();
    check_dims("B2", (b2.nrows(), nu), (n, nu))?;
    if horizon == 0 {
        return Err(SlsError::Domain("horizon must be at least 1".into()));
    }
    let pattern = ColumnPattern {
        r_rows: vec![(0..n).collect(); horizon],
        m_rows: vec![(0..nu).collect(); horizon],
    };
    let data = ColumnData { a, b2, cost: None };
    let pass = StagedPass::new(&data, &pattern);
    let cols: Vec<_> = (0..n).into_par_iter().map(|j| pass.solve(&data, j)).collect();

    let residual = cols.iter().map(|c| c.residual).fold(0.0, f64::max);
    let mut r = FirMatrix::zeros(n, n, horizon);
    let mut m = FirMatrix::zeros(nu, n, horizon);
    for (j, col) in cols.iter().enumerate() {
        for t in 0..horizon {
            r.coeffs_mut()[t + 1].set_column(j, &col.r[t]);
            m.coeffs_mut()[t + 1].set_column(j, &col.m[t]);
        }
    }
    Ok((residual, r, m))
}

/// Whether some strictly proper FIR `{R, M}` of horizon `T` satisfies
/// `[zI - A, -B2][R; M] = I`.
pub fn is_t_step_controllable(a: &DMatrix<f64>, b2: &DMatrix<f64>, horizon: usize) -> Result<Feasibility> {
    check_dims("A", a.shape(), (a.nrows(), a.nrows()))?;
    let (residual, r, m) = solve_columns(a, b2, horizon)?;
    let feasible = residual <= FEASIBILITY_TOL;
    Ok(Feasibility {
        feasible,
        residual,
        witness: if feasible {
            Some(SystemResponse::state_feedback(r, m)?)
        } else {
            None
        },
    })
}

/// Dual test: some FIR `{R, N}` of horizon `T` satisfies
/// `[R, N][zI - A; -C2] = I`.
pub fn is_t_step_observable(
    a: &DMatrix<f64>,
    c2: &DMatrix<f64>,
    horizon: usize,
) -> Result<(bool, f64, Option<EstimationWitness>)> {
    check_dims("A", a.shape(), (a.nrows(), a.nrows()))?;
    check_dims("C2", c2.shape(), (c2.nrows(), a.nrows()))?;
    let (residual, r, m) = solve_columns(&a.transpose(), &c2.transpose(), horizon)?;
    let feasible = residual <= FEASIBILITY_TOL;
    let witness = feasible.then(|| EstimationWitness {
        r: r.transpose(),
        n: m.transpose(),
    });
    Ok((feasible, residual, witness))
}

/// `A^T e_j` lies in the span of `[B2, A B2, ..., A^{T-1} B2]` for every `j`.
pub fn controllability_rank_test(a: &DMatrix<f64>, b2: &DMatrix<f64>, horizon: usize) -> bool {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(horizon);
    let mut power = DMatrix::<f64>::identity(n, n);
    for _ in 0..horizon {
        blocks.push(&power * b2);
        power = a * power;
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let ctrb = hstack(&refs, n);
    let rank = matrix_rank(&ctrb, 1e-9);
    rank == matrix_rank(&hstack(&[&ctrb, &power], n), 1e-9)
}
