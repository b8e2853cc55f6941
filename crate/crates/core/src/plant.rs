//! Discrete-time LTI plant models and their interconnection graphs.
//!
//! A plant is stored as the nine matrices of
//!
//! ```text
//! x[t+1] = A x[t] + B1 w[t] + B2 u[t]
//! z[t]   = C1 x[t] + D11 w[t] + D12 u[t]
//! y[t]   = C2 x[t] + D21 w[t] + D22 u[t]
//! ```

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{check_dims, Result, SlsError};
use crate::linalg::eigenvalue_moduli;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

impl PlantModel {
    /// Builds a plant after checking that every block conforms to the
    /// dimensions implied by `A`, `B1`, `B2`, `C1` and `C2`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c1: DMatrix<f64>,
        d11: DMatrix<f64>,
        d12: DMatrix<f64>,
        c2: DMatrix<f64>,
        d21: DMatrix<f64>,
        d22: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SlsError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let nw = b1.ncols();
        let nu = b2.ncols();
        let nz = c1.nrows();
        let ny = c2.nrows();
        check_dims("B1", b1.shape(), (n, nw))?;
        check_dims("B2", b2.shape(), (n, nu))?;
        check_dims("C1", c1.shape(), (nz, n))?;
        check_dims("D11", d11.shape(), (nz, nw))?;
        check_dims("D12", d12.shape(), (nz, nu))?;
        check_dims("C2", c2.shape(), (ny, n))?;
        check_dims("D21", d21.shape(), (ny, nw))?;
        check_dims("D22", d22.shape(), (ny, nu))?;
        Ok(Self {
            a,
            b1,
            b2,
            c1,
            d11,
            d12,
            c2,
            d21,
            d22,
        })
    }

    /// State-feedback plant: `C2 = I`, `D21 = 0`, `D22 = 0`.
    pub fn state_feedback(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c1: DMatrix<f64>,
        d11: DMatrix<f64>,
        d12: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let nw = b1.ncols();
        let nu = b2.ncols();
        Self::new(
            a,
            b1,
            b2,
            c1,
            d11,
            d12,
            DMatrix::identity(n, n),
            DMatrix::zeros(n, nw),
            DMatrix::zeros(n, nu),
        )
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b2.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c2.nrows()
    }

    pub fn n_disturbances(&self) -> usize {
        self.b1.ncols()
    }

    pub fn n_performance(&self) -> usize {
        self.c1.nrows()
    }

    /// True when the measurement block has the full-state pattern
    /// `C2 = I`, `D21 = 0`, `D22 = 0`.
    pub fn is_state_feedback(&self) -> bool {
        let n = self.n_states();
        self.c2.shape() == (n, n)
            && self.c2 == DMatrix::identity(n, n)
            && self.d21.iter().all(|&v| v == 0.0)
            && self.d22.iter().all(|&v| v == 0.0)
    }

    pub fn has_feedthrough(&self) -> bool {
        self.d22.iter().any(|&v| v != 0.0)
    }

    /// Node sets each actuator acts on (support of the columns of `B2`).
    pub fn actuator_nodes(&self) -> Vec<Vec<usize>> {
        (0..self.n_inputs())
            .map(|k| {
                (0..self.n_states())
                    .filter(|&i| self.b2[(i, k)] != 0.0)
                    .collect()
            })
            .collect()
    }

    /// Node sets each sensor observes (support of the rows of `C2`).
    pub fn sensor_nodes(&self) -> Vec<Vec<usize>> {
        (0..self.n_outputs())
            .map(|k| {
                (0..self.n_states())
                    .filter(|&i| self.c2[(k, i)] != 0.0)
                    .collect()
            })
            .collect()
    }
}

/// Undirected graph on the plant states, with edges wherever `A` couples
/// two distinct states.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionGraph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<Option<usize>>,
}

impl InterconnectionGraph {
    pub fn from_support(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(SlsError::Domain("adjacency source must be square".into()));
        }
        let n = a.nrows();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0) {
                    adjacency[i].push(j);
                }
            }
        }
        let mut dist = vec![None; n * n];
        for src in 0..n {
            let mut queue = VecDeque::from([src]);
            dist[src * n + src] = Some(0);
            while let Some(v) = queue.pop_front() {
                let dv = dist[src * n + v].unwrap_or(0);
                for &w in &adjacency[v] {
                    if dist[src * n + w].is_none() {
                        dist[src * n + w] = Some(dv + 1);
                        queue.push_back(w);
                    }
                }
            }
        }
        Ok(Self { n, adjacency, dist })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Hop distance; `None` stands for infinity (disconnected).
    pub fn distance(&self, i: usize, j: usize) -> Option<usize> {
        self.dist[i * self.n + j]
    }

    /// Smallest distance between any node of `a` and any node of `b`.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Option<usize> {
        a.iter()
            .flat_map(|&i| b.iter().filter_map(move |&j| self.distance(i, j)))
            .min()
    }
}

pub fn hop_distances(plant: &PlantModel) -> InterconnectionGraph {
    InterconnectionGraph::from_support(&plant.a).expect("plant A is square by construction")
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(SlsError::Domain(format!(
            "spectral radius needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(eigenvalue_moduli(a).into_iter().fold(0.0_f64, f64::max))
}

/// Bi-directional chain of scalar subsystems
/// `x_i[t+1] = alpha (x_i + kappa x_{i-1} + kappa x_{i+1}) + b_i u_i + w_i`
/// with `alpha` chosen so that the spectral radius of `A` is `rho_target`.
///
/// `actuator_sites` are 1-based node indices. The performance output
/// stacks `x` over `sqrt(gamma) u`.
pub fn build_chain(
    n: usize,
    kappa: f64,
    rho_target: f64,
    actuator_sites: &[usize],
    gamma: f64,
) -> Result<PlantModel> {
    if n == 0 {
        return Err(SlsError::Domain("chain needs at least one node".into()));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(SlsError::Domain(format!("kappa must be >= 0, got {kappa}")));
    }
    if !(rho_target > 0.0) || !rho_target.is_finite() {
        return Err(SlsError::Domain(format!(
            "rho_target must be > 0, got {rho_target}"
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(SlsError::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    if actuator_sites.is_empty() {
        return Err(SlsError::NoActuation);
    }
    let mut sites = actuator_sites.to_vec();
    sites.sort_unstable();
    sites.dedup();
    if let Some(&bad) = sites.iter().find(|&&s| s == 0 || s > n) {
        return Err(SlsError::Domain(format!(
            "actuator site {bad} outside 1..={n}"
        )));
    }

    let base = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if i.abs_diff(j) == 1 {
            kappa
        } else {
            0.0
        }
    });
    let rho_base = spectral_radius(&base)?;
    let alpha = rho_target / rho_base;
    let a = base * alpha;

    let nu = sites.len();
    let mut b2 = DMatrix::zeros(n, nu);
    for (k, &s) in sites.iter().enumerate() {
        b2[(s - 1, k)] = 1.0;
    }
    let mut c1 = DMatrix::zeros(n + nu, n);
    c1.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut d12 = DMatrix::zeros(n + nu, nu);
    for k in 0..nu {
        d12[(n + k, k)] = gamma.sqrt();
    }
    PlantModel::state_feedback(
        a,
        DMatrix::identity(n, n),
        b2,
        c1,
        DMatrix::zeros(n + nu, n),
        d12,
    )
}

/// Actuator layout of the 100-node benchmark: sites `5j-4` and `5j`.
pub fn benchmark_actuator_sites(groups: usize) -> Vec<usize> {
    (1..=groups).flat_map(|j| [5 * j - 4, 5 * j]).collect()
}

/// The 100-node chain with 40 actuators, `kappa = gamma = 1` and
/// spectral radius 1.1.
pub fn benchmark_chain() -> PlantModel {
    build_chain(100, 1.0, 1.1, &benchmark_actuator_sites(20), 1.0)
        .expect("benchmark parameters are valid")
}
