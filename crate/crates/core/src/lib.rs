//! System level synthesis for discrete-time LTI plants.
//!
//! The closed-loop maps from state and measurement disturbances to state
//! and control (the system response) are the design variables. Any
//! strictly proper FIR response that satisfies the affine achievability
//! constraints is realized by an internally stabilizing controller, and
//! structural requirements on the controller (locality, communication
//! delay, finite horizon) become support masks on the response.

pub mod controller;
pub mod error;
mod linalg;
pub mod plant;
pub mod response;
pub mod slc;
pub mod synth;

pub use controller::{ControllerKind, ControllerRealization};
pub use error::{Result, SlsError};
pub use linalg::matrix_rank;
pub use plant::{InterconnectionGraph, PlantModel};
pub use response::{FirMatrix, SystemResponse};
pub use slc::{Mode, SlcSet, SupportMask};
pub use synth::{SynthesisProblem, SynthesisResult};
