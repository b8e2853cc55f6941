//! System level constraints expressed as time-indexed support masks.
//!
//! A mask fixes which entries of each spectral component of a response
//! block may be nonzero. Locality, communication delay, FIR horizon and
//! explicit subspace patterns all reduce to such masks and compose by
//! entrywise AND.

use nalgebra::DMatrix;

use crate::error::{Result, SlsError};
use crate::plant::{InterconnectionGraph, PlantModel};
use crate::response::{FirMatrix, SystemResponse};

/// Which achievability constraints apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    StateFeedback,
    OutputFeedback,
}

/// Allowed support of `G[t]` for `t = 0..=T`; everything past `T` is
/// forbidden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    rows: usize,
    cols: usize,
    allowed: Vec<Vec<bool>>,
}

impl SupportMask {
    /// Everything allowed, except `t = 0` when `strictly_proper`.
    pub fn full(rows: usize, cols: usize, horizon: usize, strictly_proper: bool) -> Self {
        let mut allowed = vec![vec![true; rows * cols]; horizon + 1];
        if strictly_proper {
            allowed[0].fill(false);
        }
        Self {
            rows,
            cols,
            allowed,
        }
    }

    /// Builds from explicit per-index patterns (`patterns[t]` is rows x cols).
    pub fn from_patterns(patterns: &[DMatrix<bool>]) -> Result<Self> {
        let first = patterns
            .first()
            .ok_or_else(|| SlsError::Domain("mask needs at least one spectral index".into()))?;
        let (rows, cols) = first.shape();
        let mut allowed = Vec::with_capacity(patterns.len());
        for (t, p) in patterns.iter().enumerate() {
            if p.shape() != (rows, cols) {
                return Err(SlsError::Dimension(format!(
                    "pattern {t} is {}x{}, expected {rows}x{cols}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            allowed.push((0..rows * cols).map(|k| p[(k / cols, k % cols)]).collect());
        }
        Ok(Self {
            rows,
            cols,
            allowed,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        horizon: usize,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Self {
        let allowed = (0..=horizon)
            .map(|t| (0..rows * cols).map(|k| f(t, k / cols, k % cols)).collect())
            .collect();
        Self {
            rows,
            cols,
            allowed,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn horizon(&self) -> usize {
        self.allowed.len() - 1
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> bool {
        self.allowed
            .get(t)
            .is_some_and(|a| a[i * self.cols + j])
    }

    pub fn pattern(&self, t: usize) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(t, i, j))
    }

    /// Allowed row indices of column `j` at index `t`.
    pub fn column_support(&self, t: usize, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.get(t, i, j)).collect()
    }

    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().flatten().filter(|&&b| b).count()
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(SlsError::Dimension(format!(
                "mask shapes {}x{} and {}x{} differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Entrywise AND. The shorter horizon wins since the longer mask is
    /// zero-padded.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let h = self.horizon().min(other.horizon());
        let allowed = (0..=h)
            .map(|t| {
                self.allowed[t]
                    .iter()
                    .zip(&other.allowed[t])
                    .map(|(&a, &b)| a && b)
                    .collect()
            })
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            allowed,
        })
    }

    /// Truncates or zero-pads to exactly `horizon`.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut allowed = self.allowed.clone();
        allowed.resize(horizon + 1, vec![false; self.rows * self.cols]);
        Self {
            rows: self.rows,
            cols: self.cols,
            allowed,
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return false;
        }
        self.allowed.iter().enumerate().all(|(t, a)| {
            a.iter()
                .enumerate()
                .all(|(k, &v)| !v || other.get(t, k / self.cols, k % self.cols))
        })
    }

    /// True when every nonzero entry of `fir` is allowed.
    pub fn admits(&self, fir: &FirMatrix) -> bool {
        fir.shape() == (self.rows, self.cols)
            && fir.coeffs().iter().enumerate().all(|(t, c)| {
                (0..self.rows).all(|i| (0..self.cols).all(|j| c[(i, j)] == 0.0 || self.get(t, i, j)))
            })
    }
}

/// Node attribution of the rows and columns of one response block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockShape {
    pub row_nodes: Vec<Vec<usize>>,
    pub col_nodes: Vec<Vec<usize>>,
    pub strictly_proper: bool,
}

impl BlockShape {
    fn states(plant: &PlantModel) -> Vec<Vec<usize>> {
        (0..plant.n_states()).map(|i| vec![i]).collect()
    }

    /// `R`: states by states.
    pub fn r(plant: &PlantModel) -> Self {
        Self {
            row_nodes: Self::states(plant),
            col_nodes: Self::states(plant),
            strictly_proper: true,
        }
    }

    /// `M`: actuators by states.
    pub fn m(plant: &PlantModel) -> Self {
        Self {
            row_nodes: plant.actuator_nodes(),
            col_nodes: Self::states(plant),
            strictly_proper: true,
        }
    }

    /// `N`: states by sensors.
    pub fn n(plant: &PlantModel) -> Self {
        Self {
            row_nodes: Self::states(plant),
            col_nodes: plant.sensor_nodes(),
            strictly_proper: true,
        }
    }

    /// `L`: actuators by sensors, proper.
    pub fn l(plant: &PlantModel) -> Self {
        Self {
            row_nodes: plant.actuator_nodes(),
            col_nodes: plant.sensor_nodes(),
            strictly_proper: false,
        }
    }

    fn check_graph(&self, graph: &InterconnectionGraph) -> Result<()> {
        let n = graph.node_count();
        let bad = self
            .row_nodes
            .iter()
            .chain(&self.col_nodes)
            .flatten()
            .find(|&&v| v >= n);
        match bad {
            Some(v) => Err(SlsError::Domain(format!(
                "node {v} outside graph with {n} nodes"
            ))),
            None => Ok(()),
        }
    }

    fn first_index(&self) -> usize {
        usize::from(self.strictly_proper)
    }
}

/// `d`-hop locality. `None` means unbounded (every entry allowed).
pub fn locality_mask(
    graph: &InterconnectionGraph,
    d: Option<usize>,
    shape: &BlockShape,
    horizon: usize,
) -> Result<SupportMask> {
    shape.check_graph(graph)?;
    let rows = shape.row_nodes.len();
    let cols = shape.col_nodes.len();
    let within: Vec<bool> = (0..rows * cols)
        .map(|k| match d {
            None => true,
            Some(d) => graph
                .set_distance(&shape.row_nodes[k / cols], &shape.col_nodes[k % cols])
                .is_some_and(|dist| dist <= d),
        })
        .collect();
    let first = shape.first_index();
    Ok(SupportMask::from_fn(rows, cols, horizon, |t, i, j| {
        t >= first && within[i * cols + j]
    }))
}

/// First spectral index at which information from `dist` hops away may
/// be used, given per-hop delay `t_c`: a message received strictly
/// between two samples is usable at the next one.
pub fn delay_lag(t_c: f64, dist: usize) -> usize {
    let travel = t_c * dist as f64;
    if travel == 0.0 {
        0
    } else {
        travel.floor() as usize + 1
    }
}

/// Communication-delay mask with per-hop delay `t_c` (in samples).
/// Disconnected entries are forbidden.
pub fn delay_mask(
    graph: &InterconnectionGraph,
    t_c: f64,
    shape: &BlockShape,
    horizon: usize,
) -> Result<SupportMask> {
    if !(t_c >= 0.0) || !t_c.is_finite() {
        return Err(SlsError::Domain(format!("delay must be >= 0, got {t_c}")));
    }
    if t_c >= 1.0 {
        log::warn!("per-hop delay {t_c} >= 1: localized responses are generally infeasible");
    }
    shape.check_graph(graph)?;
    let rows = shape.row_nodes.len();
    let cols = shape.col_nodes.len();
    let first = shape.first_index();
    let earliest: Vec<Option<usize>> = (0..rows * cols)
        .map(|k| {
            graph
                .set_distance(&shape.row_nodes[k / cols], &shape.col_nodes[k % cols])
                .map(|dist| delay_lag(t_c, dist).max(first))
        })
        .collect();
    Ok(SupportMask::from_fn(rows, cols, horizon, |t, i, j| {
        earliest[i * cols + j].is_some_and(|e| t >= e)
    }))
}

/// Provenance of a constraint set.
#[derive(Debug, Clone, PartialEq)]
pub enum SlcTag {
    Fir(usize),
    Locality(Option<usize>),
    Delay(f64),
    Subspace(String),
}

/// Per-block masks sharing one FIR horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SlcSet {
    pub horizon: usize,
    pub r: SupportMask,
    pub m: SupportMask,
    pub n: Option<SupportMask>,
    pub l: Option<SupportMask>,
    pub tags: Vec<SlcTag>,
}

impl SlcSet {
    fn build(
        plant: &PlantModel,
        mode: Mode,
        horizon: usize,
        tag: SlcTag,
        mut make: impl FnMut(&BlockShape) -> Result<SupportMask>,
    ) -> Result<Self> {
        let (n, l) = match mode {
            Mode::StateFeedback => (None, None),
            Mode::OutputFeedback => (
                Some(make(&BlockShape::n(plant))?),
                Some(make(&BlockShape::l(plant))?),
            ),
        };
        Ok(Self {
            horizon,
            r: make(&BlockShape::r(plant))?,
            m: make(&BlockShape::m(plant))?,
            n,
            l,
            tags: vec![tag],
        })
    }

    /// FIR horizon only.
    pub fn fir(plant: &PlantModel, mode: Mode, horizon: usize) -> Self {
        Self::build(plant, mode, horizon, SlcTag::Fir(horizon), |s| {
            Ok(SupportMask::full(
                s.row_nodes.len(),
                s.col_nodes.len(),
                horizon,
                s.strictly_proper,
            ))
        })
        .expect("full masks cannot fail")
    }

    pub fn locality(
        plant: &PlantModel,
        graph: &InterconnectionGraph,
        d: Option<usize>,
        mode: Mode,
        horizon: usize,
    ) -> Result<Self> {
        Self::build(plant, mode, horizon, SlcTag::Locality(d), |s| {
            locality_mask(graph, d, s, horizon)
        })
    }

    pub fn delay(
        plant: &PlantModel,
        graph: &InterconnectionGraph,
        t_c: f64,
        mode: Mode,
        horizon: usize,
    ) -> Result<Self> {
        Self::build(plant, mode, horizon, SlcTag::Delay(t_c), |s| {
            delay_mask(graph, t_c, s, horizon)
        })
    }

    /// Explicit masks, e.g. loaded from pattern files.
    pub fn subspace(
        r: SupportMask,
        m: SupportMask,
        n: Option<SupportMask>,
        l: Option<SupportMask>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let horizon = r.horizon();
        let same = m.horizon() == horizon
            && n.as_ref().is_none_or(|x| x.horizon() == horizon)
            && l.as_ref().is_none_or(|x| x.horizon() == horizon);
        if !same {
            return Err(SlsError::Dimension("block masks must share one horizon".into()));
        }
        Ok(Self {
            horizon,
            r,
            m,
            n,
            l,
            tags: vec![SlcTag::Subspace(label.into())],
        })
    }

    pub fn mode(&self) -> Mode {
        if self.n.is_some() {
            Mode::OutputFeedback
        } else {
            Mode::StateFeedback
        }
    }

    /// Locality, delay and FIR constraints combined; `d = None` and
    /// `t_c = 0` impose nothing beyond the horizon.
    pub fn spatiotemporal(
        plant: &PlantModel,
        graph: &InterconnectionGraph,
        d: Option<usize>,
        t_c: f64,
        mode: Mode,
        horizon: usize,
    ) -> Result<Self> {
        let mut out = Self::fir(plant, mode, horizon);
        if d.is_some() {
            out = out.intersect(&Self::locality(plant, graph, d, mode, horizon)?)?;
        }
        if t_c != 0.0 {
            out = out.intersect(&Self::delay(plant, graph, t_c, mode, horizon)?)?;
        }
        Ok(out)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        let opt = |a: &Option<SupportMask>, b: &Option<SupportMask>| match (a, b) {
            (Some(a), Some(b)) => a.intersect(b).map(Some),
            (None, None) => Ok(None),
            _ => Err(SlsError::Dimension(
                "cannot intersect state- and output-feedback constraint sets".into(),
            )),
        };
        let mut tags = self.tags.clone();
        tags.extend(other.tags.iter().cloned());
        Ok(Self {
            horizon: self.horizon.min(other.horizon),
            r: self.r.intersect(&other.r)?,
            m: self.m.intersect(&other.m)?,
            n: opt(&self.n, &other.n)?,
            l: opt(&self.l, &other.l)?,
            tags,
        })
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        let opt = |a: &Option<SupportMask>, b: &Option<SupportMask>| match (a, b) {
            (Some(a), Some(b)) => a.is_subset_of(b),
            (None, None) => true,
            _ => false,
        };
        self.r.is_subset_of(&other.r)
            && self.m.is_subset_of(&other.m)
            && opt(&self.n, &other.n)
            && opt(&self.l, &other.l)
    }

    /// True when every block of `resp` respects its mask.
    pub fn admits(&self, resp: &SystemResponse) -> bool {
        let opt = |mask: &Option<SupportMask>, f: &Option<FirMatrix>| match (mask, f) {
            (Some(mask), Some(f)) => mask.admits(f),
            (None, None) => true,
            _ => false,
        };
        self.r.admits(&resp.r)
            && self.m.admits(&resp.m)
            && opt(&self.n, &resp.n)
            && opt(&self.l, &resp.l)
    }
}

fn bool_product(a: &DMatrix<bool>, b: &DMatrix<bool>) -> DMatrix<bool> {
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        (0..a.ncols()).any(|k| a[(i, k)] && b[(k, j)])
    })
}

/// Quadratic invariance of the sparsity pattern `k` (controller,
/// `nu x ny`) under the plant pattern `p` (`ny x nu`): holds iff
/// `supp(K P K)` is contained in `supp(K)` in Boolean arithmetic.
pub fn is_qi(k: &DMatrix<bool>, p: &DMatrix<bool>) -> Result<bool> {
    if k.ncols() != p.nrows() || p.ncols() != k.nrows() {
        return Err(SlsError::Dimension(format!(
            "K pattern {}x{} and P pattern {}x{} do not conform",
            k.nrows(),
            k.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    let kpk = bool_product(&bool_product(k, p), k);
    Ok(kpk.iter().zip(k.iter()).all(|(&x, &allowed)| !x || allowed))
}

/// Positivity tolerance for closed-loop map entries.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// True when every spectral component of the closed-loop map from `w` to
/// `z` is entrywise nonnegative (up to [`POSITIVITY_TOL`]).
pub fn positivity_check(plant: &PlantModel, resp: &SystemResponse) -> Result<bool> {
    for c in closed_loop_components(plant, resp)? {
        if c.iter().any(|&v| v < -POSITIVITY_TOL) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Components of `[C1 D12][R N; M L][B1; D21] + D11` from `w` to `z`.
pub fn closed_loop_components(
    plant: &PlantModel,
    resp: &SystemResponse,
) -> Result<Vec<DMatrix<f64>>> {
    let h = resp.horizon();
    let (c1, d12, b1, d21) = (&plant.c1, &plant.d12, &plant.b1, &plant.d21);
    if resp.r.shape() != (plant.n_states(), plant.n_states())
        || resp.m.shape() != (plant.n_inputs(), plant.n_states())
    {
        return Err(SlsError::Dimension("response does not match plant".into()));
    }
    let mut out = Vec::with_capacity(h + 1);
    for t in 0..=h {
        let mut c = c1 * resp.r.coeff(t) * b1 + d12 * resp.m.coeff(t) * b1;
        if let (Some(n), Some(l)) = (&resp.n, &resp.l) {
            c += c1 * n.coeff(t) * d21 + d12 * l.coeff(t) * d21;
        }
        if t == 0 {
            c += &plant.d11;
        }
        out.push(c);
    }
    Ok(out)
}
