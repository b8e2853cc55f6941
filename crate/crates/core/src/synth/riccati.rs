//! Infinite-horizon H2 (LQR) baseline from the discrete Riccati equation.

use nalgebra::DMatrix;

use crate::error::{Result, SlsError};
use crate::plant::{spectral_radius, PlantModel};

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 100_000;
const BLOWUP: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    /// Optimal state feedback `u = K x`.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

/// Fixed point of
/// `P = Q + A'PA - (A'PB + S)(R + B'PB)^{-1}(B'PA + S')`
/// by value iteration from `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DareSolution> {
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let lhs = r + b.transpose() * p * b;
        let rhs = b.transpose() * p * a + s.transpose();
        lhs.clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| lhs.lu().solve(&rhs))
            .map(|k| -k)
            .ok_or_else(|| SlsError::NoStabilizingSolution("R + B'PB is singular".into()))
    };

    let mut p = q.clone();
    for iter in 1..=MAX_ITER {
        let k = gain_of(&p)?;
        // A'PA + Q + (A'PB + S) K, written symmetrically
        let next = q + a.transpose() * &p * a + (a.transpose() * &p * b + s) * &k;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) || next.amax() > BLOWUP {
            return Err(SlsError::NoStabilizingSolution(format!(
                "Riccati iteration diverged after {iter} steps"
            )));
        }
        let step = (&next - &p).amax();
        p = next;
        if step <= TOL * p.amax().max(1.0) {
            let gain = gain_of(&p)?;
            let rho = spectral_radius(&(a + b * &gain))?;
            if rho >= 1.0 {
                return Err(SlsError::NoStabilizingSolution(format!(
                    "fixed point is not stabilizing (closed-loop spectral radius {rho:.6})"
                )));
            }
            return Ok(DareSolution {
                p,
                gain,
                iterations: iter,
            });
        }
    }
    Err(SlsError::NoStabilizingSolution(format!(
        "no convergence within {MAX_ITER} iterations"
    )))
}

/// Optimal centralized H2 cost with full state feedback:
/// `sqrt(trace(B1' P B1) + ||D11||_F^2)`.
pub fn centralized_baseline(plant: &PlantModel) -> Result<f64> {
    let (c1, d12) = (&plant.c1, &plant.d12);
    let q = c1.transpose() * c1;
    let r = d12.transpose() * d12;
    let s = c1.transpose() * d12;
    let sol = solve_dare(&plant.a, &plant.b2, &q, &r, &s)?;
    let b1 = &plant.b1;
    let cost_sq = (b1.transpose() * &sol.p * b1).trace() + plant.d11.norm_squared();
    Ok(cost_sq.max(0.0).sqrt())
}
