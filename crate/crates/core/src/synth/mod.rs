//! H2 synthesis over the achievable responses admitted by an [`SlcSet`].

pub(crate) mod column;
pub mod eqls;
mod output;
mod riccati;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use eqls::{solve_eq_ls, EqLsSolution, FEASIBILITY_TOL};
pub use riccati::{centralized_baseline, solve_dare, DareSolution};

use crate::error::{Result, SlsError};
use crate::plant::PlantModel;
use crate::response::{FirMatrix, SystemResponse};
use crate::slc::{Mode, SlcSet};
use column::{ColumnData, ColumnPattern, ColumnSolution, StagedPass};

/// Column problems with at most this many unknowns go to the dense kernel.
const DENSE_COLUMN_LIMIT: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnMethod {
    /// Dense for small columns, staged otherwise.
    #[default]
    Auto,
    Dense,
    Staged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub column_method: ColumnMethod,
    /// Upper bound on unknowns in the stacked output-feedback solve.
    pub dense_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            column_method: ColumnMethod::Auto,
            dense_budget: 3000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub plant: PlantModel,
    pub slc: SlcSet,
    pub mode: Mode,
}

impl SynthesisProblem {
    pub fn new(plant: PlantModel, slc: SlcSet, mode: Mode) -> Result<Self> {
        if slc.horizon < 1 {
            return Err(SlsError::Domain("FIR horizon must be at least 1".into()));
        }
        if slc.mode() != mode {
            return Err(SlsError::Precondition(format!(
                "constraint set is {:?} but problem mode is {mode:?}",
                slc.mode()
            )));
        }
        if mode == Mode::StateFeedback && !plant.is_state_feedback() {
            return Err(SlsError::Precondition(
                "state-feedback mode needs C2 = I, D21 = 0, D22 = 0".into(),
            ));
        }
        let (n, nu, ny) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
        let shape_ok = slc.r.rows() == n
            && slc.r.cols() == n
            && slc.m.rows() == nu
            && slc.m.cols() == n
            && slc.n.as_ref().is_none_or(|m| m.rows() == n && m.cols() == ny)
            && slc.l.as_ref().is_none_or(|m| m.rows() == nu && m.cols() == ny);
        if !shape_ok {
            return Err(SlsError::Dimension("constraint masks do not match the plant".into()));
        }
        Ok(Self { plant, slc, mode })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnStatus {
    Feasible,
    Infeasible { residual: f64 },
}

impl ColumnStatus {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ColumnStatus::Feasible)
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub response: SystemResponse,
    /// H2 norm (not squared) of the returned response.
    pub cost: f64,
    /// One entry per column (state feedback) or a single entry for the
    /// stacked output-feedback solve.
    pub per_column_status: Vec<ColumnStatus>,
    /// Largest achievability defect over all columns.
    pub residual: f64,
    pub wall_time: Duration,
}

impl SynthesisResult {
    pub fn is_feasible(&self) -> bool {
        self.per_column_status.iter().all(ColumnStatus::is_feasible)
    }

    pub fn infeasible_count(&self) -> usize {
        self.per_column_status.iter().filter(|s| !s.is_feasible()).count()
    }

    /// Errors with the residual certificate unless every column is feasible.
    pub fn require_feasible(self) -> Result<Self> {
        if self.is_feasible() {
            Ok(self)
        } else {
            Err(SlsError::NotAchievable {
                residual: self.residual,
            })
        }
    }
}

/// H2 norm of the closed loop from `w` to `z`:
///
/// ```text
/// sqrt( sum_{t>=1} ||C1 R[t] B1 + C1 N[t] D21 + D12 M[t] B1 + D12 L[t] D21||_F^2
///       + ||D12 L[0] D21 + D11||_F^2 )
/// ```
///
/// with the `N`, `L` terms absent for state-feedback responses.
pub fn h2_cost(plant: &PlantModel, resp: &SystemResponse) -> Result<f64> {
    let (c1, d12, b1, d21) = (&plant.c1, &plant.d12, &plant.b1, &plant.d21);
    let h = resp.horizon();
    let mut total = 0.0;
    for t in 1..=h {
        let mut z = c1 * resp.r.coeff(t) * b1 + d12 * resp.m.coeff(t) * b1;
        if let (Some(n), Some(l)) = (&resp.n, &resp.l) {
            z += c1 * n.coeff(t) * d21 + d12 * l.coeff(t) * d21;
        }
        total += z.norm_squared();
    }
    let mut z0 = plant.d11.clone();
    if let Some(l) = &resp.l {
        z0 += d12 * l.coeff(0) * d21;
    }
    total += z0.norm_squared();
    Ok(total.sqrt())
}

/// `diag(B1 B1^T)`, or an error if the disturbance directions couple
/// columns of the state-feedback problem.
fn column_weights(b1: &DMatrix<f64>) -> Result<Vec<f64>> {
    let gram = b1 * b1.transpose();
    let scale = gram.amax().max(1.0);
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            if i != j && gram[(i, j)].abs() > 1e-12 * scale {
                return Err(SlsError::Unsupported(
                    "column decomposition needs B1 B1^T diagonal".into(),
                ));
            }
        }
    }
    Ok(gram.diagonal().iter().copied().collect())
}

fn column_pattern(slc: &SlcSet, j: usize) -> ColumnPattern {
    let horizon = slc.horizon;
    ColumnPattern {
        r_rows: (1..=horizon).map(|t| slc.r.column_support(t, j)).collect(),
        m_rows: (1..=horizon).map(|t| slc.m.column_support(t, j)).collect(),
    }
}

/// Column-wise H2 synthesis for a state-feedback problem.
pub fn synthesize_sf_h2(problem: &SynthesisProblem) -> Result<SynthesisResult> {
    synthesize_sf_h2_with(problem, &SolverOptions::default())
}

pub fn synthesize_sf_h2_with(problem: &SynthesisProblem, opts: &SolverOptions) -> Result<SynthesisResult> {
    if problem.mode != Mode::StateFeedback {
        return Err(SlsError::Precondition("synthesize_sf_h2 needs state-feedback mode".into()));
    }
    let start = Instant::now();
    let plant = &problem.plant;
    let (n, nu) = (plant.n_states(), plant.n_inputs());
    let horizon = problem.slc.horizon;
    column_weights(&plant.b1)?;
    let data = ColumnData {
        a: &plant.a,
        b2: &plant.b2,
        cost: Some((&plant.c1, &plant.d12)),
    };

    let patterns: Vec<ColumnPattern> = (0..n).map(|j| column_pattern(&problem.slc, j)).collect();
    let use_dense = |p: &ColumnPattern| match opts.column_method {
        ColumnMethod::Dense => true,
        ColumnMethod::Staged => false,
        ColumnMethod::Auto => p.variable_count() <= DENSE_COLUMN_LIMIT,
    };

    // columns sharing a pattern share one backward sweep
    let mut group_of: HashMap<&ColumnPattern, usize> = HashMap::new();
    let mut unique: Vec<&ColumnPattern> = Vec::new();
    let column_group: Vec<Option<usize>> = patterns
        .iter()
        .map(|p| {
            if use_dense(p) {
                return None;
            }
            Some(*group_of.entry(p).or_insert_with(|| {
                unique.push(p);
                unique.len() - 1
            }))
        })
        .collect();
    let passes: Vec<StagedPass> = unique.par_iter().map(|p| StagedPass::new(&data, p)).collect();

    let columns: Vec<ColumnSolution> = (0..n)
        .into_par_iter()
        .map(|j| match column_group[j] {
            Some(g) => Ok(passes[g].solve(&data, j)),
            None => column::solve_dense(&data, &patterns[j], j),
        })
        .collect::<Result<_>>()?;

    let mut r = FirMatrix::zeros(n, n, horizon);
    let mut m = FirMatrix::zeros(nu, n, horizon);
    for (j, col) in columns.iter().enumerate() {
        let pattern = &patterns[j];
        for t in 0..horizon {
            // forbidden entries stay exactly zero
            for &i in &pattern.r_rows[t] {
                r.coeffs_mut()[t + 1][(i, j)] = col.r[t][i];
            }
            for &k in &pattern.m_rows[t] {
                m.coeffs_mut()[t + 1][(k, j)] = col.m[t][k];
            }
        }
    }
    let response = SystemResponse::state_feedback(r, m)?;
    let per_column_status = columns
        .iter()
        .map(|c| {
            if c.feasible {
                ColumnStatus::Feasible
            } else {
                ColumnStatus::Infeasible { residual: c.residual }
            }
        })
        .collect();
    let residual = columns.iter().map(|c| c.residual).fold(0.0, f64::max);
    let cost = h2_cost(plant, &response)?;
    Ok(SynthesisResult {
        response,
        cost,
        per_column_status,
        residual,
        wall_time: start.elapsed(),
    })
}

/// Stacked H2 synthesis for an output-feedback problem.
pub fn synthesize_of_h2(problem: &SynthesisProblem) -> Result<SynthesisResult> {
    synthesize_of_h2_with(problem, &SolverOptions::default())
}

pub fn synthesize_of_h2_with(problem: &SynthesisProblem, opts: &SolverOptions) -> Result<SynthesisResult> {
    if problem.mode != Mode::OutputFeedback {
        return Err(SlsError::Precondition("synthesize_of_h2 needs output-feedback mode".into()));
    }
    let start = Instant::now();
    let (response, residual) = output::solve_stacked(&problem.plant, &problem.slc, opts.dense_budget)?;
    let cost = h2_cost(&problem.plant, &response)?;
    let status = if residual <= FEASIBILITY_TOL {
        ColumnStatus::Feasible
    } else {
        ColumnStatus::Infeasible { residual }
    };
    Ok(SynthesisResult {
        response,
        cost,
        per_column_status: vec![status],
        residual,
        wall_time: start.elapsed(),
    })
}

/// Dispatches on the problem mode.
pub fn synthesize(problem: &SynthesisProblem, opts: &SolverOptions) -> Result<SynthesisResult> {
    match problem.mode {
        Mode::StateFeedback => synthesize_sf_h2_with(problem, opts),
        Mode::OutputFeedback => synthesize_of_h2_with(problem, opts),
    }
}
