//! Controller realizations of system responses, closed-loop simulation and
//! internal-stability verification.
//!
//! The output-feedback structure runs the filter banks
//!
//! ```text
//! R~+ = z(I - zR)   R~+[k] = -R[k+2]
//! M~  = zM          M~[k]  =  M[k+1]
//! N~  = -zN         N~[k]  = -N[k+1]
//! ```
//!
//! as `z beta = R~+ beta + N~ y + d_beta`, `u = M~ beta + L y + d_u`. The
//! state-feedback structure reconstructs the disturbance,
//! `dhat = x + d_y - sum_{k>=1} R[k+1] dhat[t-k]`, and applies
//! `u = sum_{k>=0} M[k+1] dhat[t-k] + d_u`.

mod alt;
mod maps;
mod sim;

pub use alt::{controller_series, demo_alt_structures, plant_series, youla_series, AltStructureReport};
pub use maps::{
    predicted_maps, robustness_metric, verify_internal_stability, verify_maps, Channel, ClosedLoopMaps, Signal,
    StabilityFailure, StabilityReport,
};
pub use sim::{simulate, Perturbations, SimTrace};

use crate::error::{Result, SlsError};
use crate::response::{achievability_residual, FirMatrix, SystemResponse};
use crate::plant::PlantModel;

/// Residual above which a response is refused.
pub const REALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Disturbance-reconstruction state feedback.
    Sf,
    /// Output feedback with strictly proper plant.
    Of,
    /// Output feedback acting on `y - D22 u`.
    OfD22,
    /// `u = L y - M B2 u`; internally stable only for stable plants.
    Structure1,
    /// `u = L beta`, `beta = y - C2 N beta`; internally stable only for
    /// stable plants.
    Structure2,
    /// Internal model control `u = L (y - P22 u)`.
    Imc,
}

impl ControllerKind {
    pub fn needs_output_feedback(&self) -> bool {
        !matches!(self, ControllerKind::Sf)
    }
}

#[derive(Debug, Clone)]
pub struct ControllerRealization {
    pub kind: ControllerKind,
    /// `R~+` for output feedback, `R~ = I - zR` (zero lead) for state
    /// feedback.
    pub r_bank: FirMatrix,
    pub m_bank: FirMatrix,
    pub n_bank: Option<FirMatrix>,
    pub l_bank: Option<FirMatrix>,
    /// The realized response, kept for structures that use it directly.
    pub response: SystemResponse,
}

/// `zG` for strictly proper `G`: component `k` is `G[k+1]`.
fn advance(g: &FirMatrix) -> Result<FirMatrix> {
    g.advance(REALIZATION_TOL)
}

/// Builds the filter banks of the requested structure. `plant` is needed
/// to confirm the response is achievable.
pub fn realize(plant: &PlantModel, resp: &SystemResponse, kind: ControllerKind) -> Result<ControllerRealization> {
    let residual = achievability_residual(plant, resp)?;
    if residual > REALIZATION_TOL {
        return Err(SlsError::NotAchievable { residual });
    }
    if kind.needs_output_feedback() && !resp.is_output_feedback() {
        return Err(SlsError::Precondition(format!(
            "{kind:?} realization needs an output-feedback response"
        )));
    }
    if kind == ControllerKind::Sf && resp.is_output_feedback() {
        return Err(SlsError::Precondition("Sf realization needs a state-feedback response".into()));
    }
    if kind == ControllerKind::Of && plant.has_feedthrough() {
        return Err(SlsError::Precondition("plant has D22 != 0; use OfD22".into()));
    }
    if matches!(
        kind,
        ControllerKind::Structure1 | ControllerKind::Structure2 | ControllerKind::Imc
    ) && plant.has_feedthrough()
    {
        return Err(SlsError::Unsupported(format!("{kind:?} with D22 != 0")));
    }

    let resp = resp.padded();
    let z_r = advance(&resp.r)?;
    let m_bank = advance(&resp.m)?;
    let r_tilde = FirMatrix::identity(resp.n_states()).sub(&z_r)?;
    let r_bank = match kind {
        ControllerKind::Sf => r_tilde,
        _ => r_tilde.advance(REALIZATION_TOL)?,
    };
    let (n_bank, l_bank) = match (&resp.n, &resp.l) {
        (Some(n), Some(l)) => (Some(advance(n)?.scale(-1.0)), Some(l.clone())),
        _ => (None, None),
    };
    Ok(ControllerRealization {
        kind,
        r_bank,
        m_bank,
        n_bank,
        l_bank,
        response: resp,
    })
}
