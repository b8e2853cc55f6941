#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sls_core::{FirMatrix, PlantModel, SupportMask, SystemResponse};

pub fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let tol = 1e-9 * s.max().max(1.0);
    s.iter().filter(|&&v| v > tol).count()
}

/// `[B, AB, ..., A^{T-1} B]`.
pub fn ctrb(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, b.ncols() * horizon);
    let mut blk = b.clone();
    for k in 0..horizon {
        out.view_mut((0, k * b.ncols()), blk.shape()).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Deadbeat reachability: every state is steered to zero in `T` steps iff
/// the range of `A^T` lies in the range of the `T`-block matrix.
pub fn deadbeat_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> bool {
    let c = ctrb(a, b, horizon);
    let at = a.pow(horizon as u32);
    let mut joined = DMatrix::zeros(a.nrows(), c.ncols() + a.ncols());
    joined.view_mut((0, 0), c.shape()).copy_from(&c);
    joined.view_mut((0, c.ncols()), at.shape()).copy_from(&at);
    rank(&c) == rank(&joined)
}

/// Output-feedback plant with cost `|x|^2 + |u|^2` and independent
/// process and sensor noise.
pub fn of_plant(a: DMatrix<f64>, b2: DMatrix<f64>, c2: DMatrix<f64>) -> PlantModel {
    let (n, nu, ny) = (a.nrows(), b2.ncols(), c2.nrows());
    let c1 = stack(&DMatrix::identity(n, n), &DMatrix::zeros(nu, n));
    let d12 = stack(&DMatrix::zeros(n, nu), &DMatrix::identity(nu, nu));
    let mut b1 = DMatrix::zeros(n, n + ny);
    b1.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut d21 = DMatrix::zeros(ny, n + ny);
    d21.view_mut((0, n), (ny, ny)).fill_with_identity();
    PlantModel::new(
        a,
        b1,
        b2,
        c1,
        DMatrix::zeros(n + nu, n + ny),
        d12,
        c2,
        d21,
        DMatrix::zeros(ny, nu),
    )
    .unwrap()
}

pub fn sf_plant(a: DMatrix<f64>, b2: DMatrix<f64>) -> PlantModel {
    let (n, nu) = (a.nrows(), b2.ncols());
    PlantModel::state_feedback(
        a,
        DMatrix::identity(n, n),
        b2,
        stack(&DMatrix::identity(n, n), &DMatrix::zeros(nu, n)),
        DMatrix::zeros(n + nu, n),
        stack(&DMatrix::zeros(n, nu), &DMatrix::identity(nu, nu)),
    )
    .unwrap()
}

/// Random triple that is both controllable and observable.
pub fn controllable_observable(rng: &mut ChaCha8Rng, n: usize, nu: usize, ny: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    loop {
        let a = rand_matrix(rng, n, n);
        let b2 = rand_matrix(rng, n, nu);
        let c2 = rand_matrix(rng, ny, n);
        if rank(&ctrb(&a, &b2, n)) == n && rank(&ctrb(&a.transpose(), &c2.transpose(), n)) == n {
            return (a, b2, c2);
        }
    }
}

pub struct DenseSolution {
    pub response: SystemResponse,
    pub residual: f64,
}

/// Whole-matrix state-feedback problem solved through its KKT system:
///
/// ```text
/// min  sum_t |C1 R[t] B1 + D12 M[t] B1|^2
/// s.t. R[1] = I,  R[t+1] = A R[t] + B2 M[t],  R[T+1] = 0,  masks
/// ```
pub fn dense_sf_oracle(plant: &PlantModel, r_mask: &SupportMask, m_mask: &SupportMask) -> DenseSolution {
    let (n, nu) = (plant.n_states(), plant.n_inputs());
    let horizon = r_mask.horizon();
    let mut index = std::collections::HashMap::new();
    let mut next = 0;
    for t in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                if r_mask.get(t, i, j) {
                    index.insert(('r', t, i, j), next);
                    next += 1;
                }
            }
        }
        for i in 0..nu {
            for j in 0..n {
                if m_mask.get(t, i, j) {
                    index.insert(('m', t, i, j), next);
                    next += 1;
                }
            }
        }
    }
    let nv = next;
    let var = |b: char, t: usize, i: usize, j: usize| index.get(&(b, t, i, j)).copied();

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let coefs = var('r', 1, i, j).map(|v| vec![(v, 1.0)]).unwrap_or_default();
            rows.push((coefs, if i == j { 1.0 } else { 0.0 }));
        }
    }
    for t in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                let mut coefs = Vec::new();
                if let Some(v) = var('r', t + 1, i, j) {
                    coefs.push((v, 1.0));
                }
                for k in 0..n {
                    if let Some(v) = var('r', t, k, j) {
                        coefs.push((v, -plant.a[(i, k)]));
                    }
                }
                for k in 0..nu {
                    if let Some(v) = var('m', t, k, j) {
                        coefs.push((v, -plant.b2[(i, k)]));
                    }
                }
                rows.push((coefs, 0.0));
            }
        }
    }
    let ne = rows.len();
    let mut e = DMatrix::zeros(ne, nv);
    let mut f = DVector::zeros(ne);
    for (r, (coefs, rhs)) in rows.iter().enumerate() {
        for &(v, c) in coefs {
            e[(r, v)] += c;
        }
        f[r] = *rhs;
    }

    // Hessian of the objective, entry by entry
    let (c1, d12, b1) = (&plant.c1, &plant.d12, &plant.b1);
    let nz = c1.nrows();
    let nw = b1.ncols();
    let mut g = DMatrix::zeros(horizon * nz * nw, nv);
    for ((b, t, i, j), &v) in &index {
        let left = if *b == 'r' { c1.column(*i) } else { d12.column(*i) };
        for p in 0..nz {
            for q in 0..nw {
                g[((t - 1) * nz * nw + p * nw + q, v)] += left[p] * b1[(*j, q)];
            }
        }
    }
    let h = g.transpose() * &g;

    let mut kkt = DMatrix::zeros(nv + ne, nv + ne);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&(h * 2.0));
    kkt.view_mut((0, nv), (nv, ne)).copy_from(&e.transpose());
    kkt.view_mut((nv, 0), (ne, nv)).copy_from(&e);
    let mut rhs = DVector::zeros(nv + ne);
    rhs.rows_mut(nv, ne).copy_from(&f);
    let pinv = kkt.pseudo_inverse(1e-11).unwrap();
    let sol = pinv * rhs;
    let x = sol.rows(0, nv).into_owned();
    let residual = (&e * &x - &f).amax();

    let mut r = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut m = vec![DMatrix::zeros(nu, n); horizon + 1];
    for ((b, t, i, j), &v) in &index {
        if *b == 'r' {
            r[*t][(*i, *j)] = x[v];
        } else {
            m[*t][(*i, *j)] = x[v];
        }
    }
    let response = SystemResponse::state_feedback(FirMatrix::new(r).unwrap(), FirMatrix::new(m).unwrap()).unwrap();
    DenseSolution { response, residual }
}
