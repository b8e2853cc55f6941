//! One column of the state-feedback problem.
//!
//! Column `j` of `{R, M}` is the response to a unit disturbance at state
//! `j`. Writing `r_t = R[t] e_j` and `m_t = M[t] e_j`, the column problem is
//!
//! ```text
//! minimize   sum_t || C1 r_t + D12 m_t ||^2
//! subject to r_1 = e_j,  r_{t+1} = A r_t + B2 m_t  (t = 1..T),  r_{T+1} = 0,
//!            entries outside the column's mask fixed to zero.
//! ```
//!
//! Two solvers are provided. [`solve_dense`] assembles the stacked
//! equality-constrained least-squares problem and hands it to
//! [`solve_eq_ls`]. [`StagedPass`] exploits the time structure: a backward
//! sweep eliminates one stage at a time, carrying a quadratic cost-to-go
//! and the linear subspace of states from which the remaining constraints
//! can still be met. Its cost is linear in `T`, so it handles long
//! horizons and unlocalized columns that the dense route cannot.

use nalgebra::{DMatrix, DVector};

use super::eqls::{solve_eq_ls, FEASIBILITY_TOL};
use crate::error::Result;
use crate::linalg::{hstack, null_space, pinv, row_basis, submatrix, vstack};

const RANK_REL_TOL: f64 = 1e-10;

/// Allowed rows of `R[t] e_j` and `M[t] e_j` for `t = 1..=T`
/// (index `t - 1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct ColumnPattern {
    pub r_rows: Vec<Vec<usize>>,
    pub m_rows: Vec<Vec<usize>>,
}

impl ColumnPattern {
    pub fn horizon(&self) -> usize {
        self.r_rows.len()
    }

    pub fn variable_count(&self) -> usize {
        self.r_rows.iter().map(Vec::len).sum::<usize>()
            + self.m_rows.iter().map(Vec::len).sum::<usize>()
    }
}

/// Plant data the column problem needs.
pub(crate) struct ColumnData<'a> {
    pub a: &'a DMatrix<f64>,
    pub b2: &'a DMatrix<f64>,
    /// `(C1, D12)`; `None` for a pure feasibility problem.
    pub cost: Option<(&'a DMatrix<f64>, &'a DMatrix<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct ColumnSolution {
    /// `r_t` for `t = 1..=T`.
    pub r: Vec<DVector<f64>>,
    pub m: Vec<DVector<f64>>,
    /// Max-entry defect of the column constraints.
    pub residual: f64,
    pub feasible: bool,
}

fn column_residual(data: &ColumnData, j: usize, r: &[DVector<f64>], m: &[DVector<f64>]) -> f64 {
    let n = data.a.nrows();
    let mut worst = 0.0_f64;
    if let Some(r1) = r.first() {
        let mut e = r1.clone();
        e[j] -= 1.0;
        worst = worst.max(e.amax());
    } else {
        worst = 1.0;
    }
    for t in 0..r.len() {
        let next = r.get(t + 1).cloned().unwrap_or_else(|| DVector::zeros(n));
        let defect = next - data.a * &r[t] - data.b2 * &m[t];
        worst = worst.max(defect.amax());
    }
    worst
}

#[cfg(test)]
fn column_cost(data: &ColumnData, r: &[DVector<f64>], m: &[DVector<f64>]) -> f64 {
    match data.cost {
        Some((c1, d12)) => r
            .iter()
            .zip(m)
            .map(|(rt, mt)| (c1 * rt + d12 * mt).norm_squared())
            .sum(),
        None => 0.0,
    }
}

fn finish(data: &ColumnData, j: usize, r: Vec<DVector<f64>>, m: Vec<DVector<f64>>) -> ColumnSolution {
    let residual = column_residual(data, j, &r, &m);
    ColumnSolution {
        r,
        m,
        residual,
        feasible: residual <= FEASIBILITY_TOL,
    }
}

/// Stacked equality-constrained least squares over the allowed entries.
pub(crate) fn solve_dense(data: &ColumnData, pattern: &ColumnPattern, j: usize) -> Result<ColumnSolution> {
    let n = data.a.nrows();
    let nu = data.b2.ncols();
    let horizon = pattern.horizon();

    // variable indices, per t (0-based t-1)
    let mut next = 0;
    let mut r_idx = vec![vec![None; n]; horizon];
    let mut m_idx = vec![vec![None; nu]; horizon];
    for t in 0..horizon {
        for &i in &pattern.r_rows[t] {
            r_idx[t][i] = Some(next);
            next += 1;
        }
        for &k in &pattern.m_rows[t] {
            m_idx[t][k] = Some(next);
            next += 1;
        }
    }
    let nvar = next;

    let mut e_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut push = |coefs: Vec<(usize, f64)>, rhs: f64| {
        if !coefs.is_empty() || rhs != 0.0 {
            e_rows.push((coefs, rhs));
        }
    };
    if horizon == 0 {
        push(Vec::new(), 1.0);
    } else {
        for i in 0..n {
            let rhs = if i == j { 1.0 } else { 0.0 };
            let coefs = r_idx[0][i].map(|v| vec![(v, 1.0)]).unwrap_or_default();
            push(coefs, rhs);
        }
    }
    for t in 0..horizon {
        for i in 0..n {
            let mut coefs = Vec::new();
            if t + 1 < horizon {
                if let Some(v) = r_idx[t + 1][i] {
                    coefs.push((v, 1.0));
                }
            }
            for k in 0..n {
                let a = data.a[(i, k)];
                if a != 0.0 {
                    if let Some(v) = r_idx[t][k] {
                        coefs.push((v, -a));
                    }
                }
            }
            for k in 0..nu {
                let b = data.b2[(i, k)];
                if b != 0.0 {
                    if let Some(v) = m_idx[t][k] {
                        coefs.push((v, -b));
                    }
                }
            }
            push(coefs, 0.0);
        }
    }

    let mut e = DMatrix::zeros(e_rows.len(), nvar);
    let mut f = DVector::zeros(e_rows.len());
    for (row, (coefs, rhs)) in e_rows.iter().enumerate() {
        for &(v, c) in coefs {
            e[(row, v)] += c;
        }
        f[row] = *rhs;
    }

    let (g, h) = match data.cost {
        Some((c1, d12)) => {
            let nz = c1.nrows();
            let mut g = DMatrix::zeros(nz * horizon, nvar);
            for t in 0..horizon {
                for a in 0..nz {
                    for &i in &pattern.r_rows[t] {
                        g[(t * nz + a, r_idx[t][i].unwrap())] = c1[(a, i)];
                    }
                    for &k in &pattern.m_rows[t] {
                        g[(t * nz + a, m_idx[t][k].unwrap())] = d12[(a, k)];
                    }
                }
            }
            (g, DVector::zeros(nz * horizon))
        }
        None => (DMatrix::zeros(0, nvar), DVector::zeros(0)),
    };

    let sol = solve_eq_ls(&g, &h, &e, &f)?;
    let mut r = vec![DVector::zeros(n); horizon];
    let mut m = vec![DVector::zeros(nu); horizon];
    for t in 0..horizon {
        for i in 0..n {
            if let Some(v) = r_idx[t][i] {
                r[t][i] = sol.x[v];
            }
        }
        for k in 0..nu {
            if let Some(v) = m_idx[t][k] {
                m[t][k] = sol.x[v];
            }
        }
    }
    Ok(finish(data, j, r, m))
}

/// Stage `t` of the backward sweep: input `v = K x` on local coordinates
/// and the local dynamics `x' = A_in x + B_in v`.
#[derive(Debug, Clone)]
struct StageGain {
    s_rows: Vec<usize>,
    u_rows: Vec<usize>,
    gain: DMatrix<f64>,
    a_in: DMatrix<f64>,
    b_in: DMatrix<f64>,
}

/// Backward sweep for one column pattern. It does not depend on which
/// state the disturbance hits, so columns sharing a pattern share a pass.
#[derive(Debug, Clone)]
pub(crate) struct StagedPass {
    stages: Vec<StageGain>,
}

impl StagedPass {
    pub fn new(data: &ColumnData, pattern: &ColumnPattern) -> Self {
        let n = data.a.nrows();
        let horizon = pattern.horizon();
        let mut stages = Vec::with_capacity(horizon);
        let mut next_rows: Vec<usize> = Vec::new();
        let mut p_next = DMatrix::<f64>::zeros(0, 0);
        let mut h_next = DMatrix::<f64>::zeros(0, 0);

        for t in (0..horizon).rev() {
            let s_rows = pattern.r_rows[t].clone();
            let u_rows = pattern.m_rows[t].clone();
            let (s, u) = (s_rows.len(), u_rows.len());

            let a_in = submatrix(data.a, &next_rows, &s_rows);
            let b_in = submatrix(data.b2, &next_rows, &u_rows);
            let mut in_next = vec![false; n];
            for &i in &next_rows {
                in_next[i] = true;
            }
            let out_rows: Vec<usize> = (0..n)
                .filter(|&i| {
                    !in_next[i]
                        && (s_rows.iter().any(|&k| data.a[(i, k)] != 0.0)
                            || u_rows.iter().any(|&k| data.b2[(i, k)] != 0.0))
                })
                .collect();
            let a_out = submatrix(data.a, &out_rows, &s_rows);
            let b_out = submatrix(data.b2, &out_rows, &u_rows);
            let cx = vstack(&[&a_out, &(&h_next * &a_in)], s);
            let cv = vstack(&[&b_out, &(&h_next * &b_in)], u);

            let ab = hstack(&[&a_in, &b_in], next_rows.len());
            let mut w = ab.transpose() * &p_next * &ab;
            if let Some((c1, d12)) = data.cost {
                let z = hstack(
                    &[
                        &submatrix(c1, &(0..c1.nrows()).collect::<Vec<_>>(), &s_rows),
                        &submatrix(d12, &(0..d12.nrows()).collect::<Vec<_>>(), &u_rows),
                    ],
                    c1.nrows(),
                );
                w += z.transpose() * z;
            }

            let (kp, nv, h_raw) = if cv.nrows() > 0 {
                let (cv_pinv, _) = pinv(&cv, RANK_REL_TOL);
                let kp = -&cv_pinv * &cx;
                let nv = null_space(&cv, RANK_REL_TOL);
                let h_raw = &cx + &cv * &kp;
                (kp, nv, h_raw)
            } else {
                (DMatrix::zeros(u, s), DMatrix::identity(u, u), DMatrix::zeros(0, s))
            };

            let mut phi = DMatrix::zeros(s + u, s);
            phi.view_mut((0, 0), (s, s)).fill_with_identity();
            phi.view_mut((s, 0), (u, s)).copy_from(&kp);
            let mut psi = DMatrix::zeros(s + u, nv.ncols());
            psi.view_mut((s, 0), (u, nv.ncols())).copy_from(&nv);

            let q_yy = psi.transpose() * &w * &psi;
            let q_yx = psi.transpose() * &w * &phi;
            let (q_yy_pinv, _) = pinv(&q_yy, RANK_REL_TOL);
            let gain = &kp - &nv * (q_yy_pinv * q_yx);

            let mut gamma = DMatrix::zeros(s + u, s);
            gamma.view_mut((0, 0), (s, s)).fill_with_identity();
            gamma.view_mut((s, 0), (u, s)).copy_from(&gain);
            let p = gamma.transpose() * &w * &gamma;
            p_next = (&p + p.transpose()) * 0.5;
            h_next = row_basis(&h_raw, RANK_REL_TOL);
            next_rows = s_rows.clone();

            stages.push(StageGain {
                s_rows,
                u_rows,
                gain,
                a_in,
                b_in,
            });
        }
        stages.reverse();
        Self { stages }
    }

    /// Forward pass for a unit disturbance at state `j`.
    pub fn solve(&self, data: &ColumnData, j: usize) -> ColumnSolution {
        let n = data.a.nrows();
        let nu = data.b2.ncols();
        let horizon = self.stages.len();
        let mut r = Vec::with_capacity(horizon);
        let mut m = Vec::with_capacity(horizon);
        if let Some(first) = self.stages.first() {
            let mut x = DVector::from_iterator(
                first.s_rows.len(),
                first.s_rows.iter().map(|&i| if i == j { 1.0 } else { 0.0 }),
            );
            for stage in &self.stages {
                let v = &stage.gain * &x;
                let mut rt = DVector::zeros(n);
                for (k, &i) in stage.s_rows.iter().enumerate() {
                    rt[i] = x[k];
                }
                let mut mt = DVector::zeros(nu);
                for (k, &i) in stage.u_rows.iter().enumerate() {
                    mt[i] = v[k];
                }
                r.push(rt);
                m.push(mt);
                x = &stage.a_in * &x + &stage.b_in * &v;
            }
        }
        finish(data, j, r, m)
    }
}
