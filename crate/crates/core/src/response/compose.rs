//! Output-feedback responses from a state-feedback design and an estimator.

use super::{sf_residual, EstimationWitness, SystemResponse};
use crate::error::{Result, SlsError};
use crate::plant::PlantModel;

/// Residual above which an input response is rejected.
const PRECONDITION_TOL: f64 = 1e-8;

/// Combines a state-feedback response `{R1, M1}` with an estimation
/// response `{R2, N2}`:
///
/// ```text
/// R = R1 + R2 - R1 (zI - A) R2      N = N2 - R1 (zI - A) N2
/// M = M1 - M1 (zI - A) R2           L = -M1 (zI - A) N2
/// ```
pub fn compose_output_feedback(
    plant: &PlantModel,
    sf: &SystemResponse,
    est: &EstimationWitness,
) -> Result<SystemResponse> {
    let sf_res = sf_residual(plant, sf)?;
    if sf_res > PRECONDITION_TOL {
        return Err(SlsError::Precondition(format!(
            "state-feedback response has residual {sf_res:.3e}"
        )));
    }
    let est_res = est.residual(&plant.a, &plant.c2)?;
    if est_res > PRECONDITION_TOL {
        return Err(SlsError::Precondition(format!(
            "estimation response has residual {est_res:.3e}"
        )));
    }
    let a = &plant.a;
    let shifted_r2 = est.r.apply_shift_operator(a)?;
    let shifted_n2 = est.n.apply_shift_operator(a)?;
    let (r1, m1) = (&sf.r, &sf.m);

    let r = r1.add(&est.r)?.sub(&r1.mul(&shifted_r2)?)?;
    let m = m1.sub(&m1.mul(&shifted_r2)?)?;
    let n = est.n.sub(&r1.mul(&shifted_n2)?)?;
    let l = m1.mul(&shifted_n2)?.scale(-1.0);
    SystemResponse::output_feedback(r, m, n, l).map(|s| s.padded())
}
