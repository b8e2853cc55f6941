//! Stacked equality-constrained least squares for output feedback.

use nalgebra::{DMatrix, DVector};

use super::eqls::solve_eq_ls;
use crate::error::{Result, SlsError};
use crate::plant::PlantModel;
use crate::response::{of_residual, FirMatrix, SystemResponse};
use crate::slc::{SlcSet, SupportMask};

/// Variable index of every allowed entry of one block, per spectral index.
struct BlockVars {
    rows: usize,
    cols: usize,
    idx: Vec<Vec<Option<usize>>>,
}

impl BlockVars {
    fn new(mask: &SupportMask, first: usize, horizon: usize, next: &mut usize) -> Self {
        let (rows, cols) = (mask.rows(), mask.cols());
        let mut idx = vec![vec![None; rows * cols]; horizon + 1];
        for (t, slot) in idx.iter_mut().enumerate().skip(first) {
            for i in 0..rows {
                for j in 0..cols {
                    if mask.get(t, i, j) {
                        slot[i * cols + j] = Some(*next);
                        *next += 1;
                    }
                }
            }
        }
        Self { rows, cols, idx }
    }

    fn var(&self, t: usize, i: usize, j: usize) -> Option<usize> {
        self.idx.get(t).and_then(|v| v[i * self.cols + j])
    }

    fn extract(&self, x: &DVector<f64>) -> FirMatrix {
        let coeffs = self
            .idx
            .iter()
            .map(|slot| {
                DMatrix::from_fn(self.rows, self.cols, |i, j| {
                    slot[i * self.cols + j].map_or(0.0, |v| x[v])
                })
            })
            .collect();
        FirMatrix::new(coeffs).expect("uniform shapes")
    }
}

/// One linear equation `sum coef * var = rhs`.
type Row = (Vec<(usize, f64)>, f64);

/// Entry `(i, j)` of `X[t+1] - P X[t] - Q Y[t]`. Entries without a
/// variable (forbidden or past the horizon) contribute nothing.
fn left_row(
    x: &BlockVars,
    y: &BlockVars,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    t: usize,
    i: usize,
    j: usize,
) -> Vec<(usize, f64)> {
    let mut coefs = Vec::new();
    if let Some(v) = x.var(t + 1, i, j) {
        coefs.push((v, 1.0));
    }
    for k in 0..p.ncols() {
        let c = p[(i, k)];
        if c != 0.0 {
            if let Some(v) = x.var(t, k, j) {
                coefs.push((v, -c));
            }
        }
    }
    for k in 0..q.ncols() {
        let c = q[(i, k)];
        if c != 0.0 {
            if let Some(v) = y.var(t, k, j) {
                coefs.push((v, -c));
            }
        }
    }
    coefs
}

/// Entry `(i, j)` of `X[t+1] - X[t] P - Y[t] Q`.
fn right_row(
    x: &BlockVars,
    y: &BlockVars,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    t: usize,
    i: usize,
    j: usize,
) -> Vec<(usize, f64)> {
    let mut coefs = Vec::new();
    if let Some(v) = x.var(t + 1, i, j) {
        coefs.push((v, 1.0));
    }
    for k in 0..p.nrows() {
        let c = p[(k, j)];
        if c != 0.0 {
            if let Some(v) = x.var(t, i, k) {
                coefs.push((v, -c));
            }
        }
    }
    for k in 0..q.nrows() {
        let c = q[(k, j)];
        if c != 0.0 {
            if let Some(v) = y.var(t, i, k) {
                coefs.push((v, -c));
            }
        }
    }
    coefs
}

/// Solves the stacked problem; returns the response and its residual.
pub(super) fn solve_stacked(plant: &PlantModel, slc: &SlcSet, budget: usize) -> Result<(SystemResponse, f64)> {
    let (n_mask, l_mask) = match (&slc.n, &slc.l) {
        (Some(n), Some(l)) => (n, l),
        _ => return Err(SlsError::Precondition("output feedback needs N and L masks".into())),
    };
    let horizon = slc.horizon;
    let (n, nu, ny) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
    let (a, b2, c2) = (&plant.a, &plant.b2, &plant.c2);

    let mut next = 0;
    let rv = BlockVars::new(&slc.r, 1, horizon, &mut next);
    let mv = BlockVars::new(&slc.m, 1, horizon, &mut next);
    let nv = BlockVars::new(n_mask, 1, horizon, &mut next);
    let lv = BlockVars::new(l_mask, 0, horizon, &mut next);
    let nvar = next;
    if nvar > budget {
        return Err(SlsError::TooLarge {
            variables: nvar,
            budget,
        });
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut push = |coefs: Vec<(usize, f64)>, rhs: f64| {
        if !coefs.is_empty() || rhs != 0.0 {
            rows.push((coefs, rhs));
        }
    };
    for i in 0..n {
        for j in 0..n {
            let coefs = rv.var(1, i, j).map(|v| vec![(v, 1.0)]).unwrap_or_default();
            push(coefs, if i == j { 1.0 } else { 0.0 });
        }
    }
    // N[1] = B2 L[0];  M[1] = L[0] C2
    for i in 0..n {
        for j in 0..ny {
            let mut coefs: Vec<(usize, f64)> = nv.var(1, i, j).map(|v| vec![(v, 1.0)]).unwrap_or_default();
            for k in 0..nu {
                let c = b2[(i, k)];
                if c != 0.0 {
                    if let Some(v) = lv.var(0, k, j) {
                        coefs.push((v, -c));
                    }
                }
            }
            push(coefs, 0.0);
        }
    }
    for i in 0..nu {
        for j in 0..n {
            let mut coefs = Vec::new();
            if let Some(v) = mv.var(1, i, j) {
                coefs.push((v, 1.0));
            }
            for k in 0..ny {
                let c = c2[(k, j)];
                if c != 0.0 {
                    if let Some(v) = lv.var(0, i, k) {
                        coefs.push((v, -c));
                    }
                }
            }
            push(coefs, 0.0);
        }
    }
    for t in 1..=horizon {
        // R[t+1] = A R[t] + B2 M[t]
        for i in 0..n {
            for j in 0..n {
                push(left_row(&rv, &mv, a, b2, t, i, j), 0.0);
            }
        }
        // N[t+1] = A N[t] + B2 L[t]
        for i in 0..n {
            for j in 0..ny {
                push(left_row(&nv, &lv, a, b2, t, i, j), 0.0);
            }
        }
        // R[t+1] = R[t] A + N[t] C2
        for i in 0..n {
            for j in 0..n {
                push(right_row(&rv, &nv, a, c2, t, i, j), 0.0);
            }
        }
        // M[t+1] = M[t] A + L[t] C2
        for i in 0..nu {
            for j in 0..n {
                push(right_row(&mv, &lv, a, c2, t, i, j), 0.0);
            }
        }
    }

    let mut e = DMatrix::zeros(rows.len(), nvar);
    let mut f = DVector::zeros(rows.len());
    for (r, (coefs, rhs)) in rows.iter().enumerate() {
        for &(v, c) in coefs {
            e[(r, v)] += c;
        }
        f[r] = *rhs;
    }

    // objective: vec of C1 R B1 + C1 N D21 + D12 M B1 + D12 L D21 (+ D11 at t = 0)
    let (c1, d12, b1, d21) = (&plant.c1, &plant.d12, &plant.b1, &plant.d21);
    let (nz, nw) = (c1.nrows(), b1.ncols());
    let per_t = nz * nw;
    let mut g = DMatrix::zeros(per_t * (horizon + 1), nvar);
    let mut h = DVector::zeros(per_t * (horizon + 1));
    for a_ in 0..nz {
        for b in 0..nw {
            h[a_ * nw + b] = -plant.d11[(a_, b)];
        }
    }
    let mut scatter = |block: &BlockVars, left: &DMatrix<f64>, right: &DMatrix<f64>| {
        for (t, slot) in block.idx.iter().enumerate() {
            for i in 0..block.rows {
                for k in 0..block.cols {
                    let Some(v) = slot[i * block.cols + k] else { continue };
                    for a_ in 0..nz {
                        let la = left[(a_, i)];
                        if la == 0.0 {
                            continue;
                        }
                        for b in 0..nw {
                            let rb = right[(k, b)];
                            if rb != 0.0 {
                                g[(t * per_t + a_ * nw + b, v)] += la * rb;
                            }
                        }
                    }
                }
            }
        }
    };
    scatter(&rv, c1, b1);
    scatter(&nv, c1, d21);
    scatter(&mv, d12, b1);
    scatter(&lv, d12, d21);

    let sol = solve_eq_ls(&g, &h, &e, &f)?;
    let resp = SystemResponse::output_feedback(
        rv.extract(&sol.x),
        mv.extract(&sol.x),
        nv.extract(&sol.x),
        lv.extract(&sol.x),
    )?;
    let residual = of_residual(plant, &resp)?;
    Ok((resp, residual))
}
