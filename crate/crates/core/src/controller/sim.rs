//! Closed-loop simulation of a realized controller against the plant.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DVector;

use super::{Channel, ControllerKind, ControllerRealization};
use crate::error::{Result, SlsError};
use crate::plant::PlantModel;
use crate::response::FirMatrix;

/// Additive perturbation series, one vector per step `t = 0..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub dx: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    pub dbeta: Vec<DVector<f64>>,
}

impl Perturbations {
    pub fn zeros(plant: &PlantModel, kind: ControllerKind, steps: usize) -> Self {
        let series = |dim: usize| vec![DVector::zeros(dim); steps + 1];
        Self {
            dx: series(plant.n_states()),
            dy: series(plant.n_outputs()),
            du: series(plant.n_inputs()),
            dbeta: series(beta_input_dim(plant, kind)),
        }
    }

    /// Unit impulse at `t = 0` on one coordinate of one channel.
    pub fn impulse(plant: &PlantModel, kind: ControllerKind, steps: usize, channel: Channel, coord: usize) -> Self {
        let mut p = Self::zeros(plant, kind, steps);
        let target = match channel {
            Channel::Dx => &mut p.dx,
            Channel::Dy => &mut p.dy,
            Channel::Du => &mut p.du,
            Channel::Dbeta => &mut p.dbeta,
        };
        target[0][coord] = 1.0;
        p
    }

    pub fn steps(&self) -> usize {
        self.dx.len().saturating_sub(1)
    }

    /// Entrywise sum.
    pub fn add(&self, other: &Self) -> Self {
        let sum = |a: &[DVector<f64>], b: &[DVector<f64>]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Self {
            dx: sum(&self.dx, &other.dx),
            dy: sum(&self.dy, &other.dy),
            du: sum(&self.du, &other.du),
            dbeta: sum(&self.dbeta, &other.dbeta),
        }
    }
}

/// Dimension of the `d_beta` injection point of each structure.
pub(crate) fn beta_input_dim(plant: &PlantModel, kind: ControllerKind) -> usize {
    match kind {
        ControllerKind::Sf | ControllerKind::Of | ControllerKind::OfD22 => plant.n_states(),
        ControllerKind::Structure1 | ControllerKind::Imc => plant.n_inputs(),
        ControllerKind::Structure2 => plant.n_outputs(),
    }
}

/// Signals of one simulated run, each of length `H + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Measurement seen by the controller (`y - D22 u_c` for `OfD22`).
    pub y: Vec<DVector<f64>>,
    /// Controller internal state: `beta` for output feedback, the
    /// reconstructed disturbance for state feedback, `-B2 u_c[t-1]` for
    /// structure 1, the filtered measurement for structure 2 and the
    /// model state for IMC.
    pub beta: Vec<DVector<f64>>,
    /// Disturbance estimate of the state-feedback structure (zero otherwise).
    pub dhat: Vec<DVector<f64>>,
    /// Performance output `C1 x + D12 u`.
    pub z: Vec<DVector<f64>>,
    pub perturbations: Perturbations,
}

impl SimTrace {
    pub fn steps(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    /// Writes `t, x0.., u0.., y0.., beta0..` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        for (name, series) in [("x", &self.x), ("u", &self.u), ("y", &self.y), ("beta", &self.beta)] {
            let dim = series.first().map_or(0, |v| v.len());
            header.extend((0..dim).map(|i| format!("{name}{i}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for t in 0..self.x.len() {
            let mut row = vec![t.to_string()];
            for series in [&self.x, &self.u, &self.y, &self.beta] {
                row.extend(series[t].iter().map(|v| format!("{v:e}")));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Most recent sample first; holds as many samples as the bank needs.
struct History {
    buf: VecDeque<DVector<f64>>,
    depth: usize,
}

impl History {
    fn new(depth: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(depth + 1),
            depth: depth.max(1),
        }
    }

    fn push(&mut self, v: DVector<f64>) {
        self.buf.push_front(v);
        self.buf.truncate(self.depth);
    }

    /// `sum_{k >= from} bank[k] h[t-k]` where `h[t]` is the newest entry.
    fn convolve(&self, bank: &FirMatrix, from: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(bank.rows());
        for (k, v) in self.buf.iter().enumerate().skip(from) {
            if let Some(c) = bank.get(k) {
                acc += c * v;
            }
        }
        acc
    }

    /// Same as [`convolve`] but with the newest entry treated as `h[t-1]`.
    fn convolve_delayed(&self, bank: &FirMatrix, from: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(bank.rows());
        for (k, v) in self.buf.iter().enumerate() {
            if k + 1 < from {
                continue;
            }
            if let Some(c) = bank.get(k + 1) {
                acc += c * v;
            }
        }
        acc
    }
}

fn check_series(name: &str, s: &[DVector<f64>], dim: usize, len: usize) -> Result<()> {
    if s.len() != len || s.iter().any(|v| v.len() != dim) {
        return Err(SlsError::Dimension(format!(
            "{name}: expected {len} vectors of length {dim}"
        )));
    }
    Ok(())
}

/// Runs the closed loop for `t = 0..=H` from zero initial conditions.
///
/// Within each step the measurement is formed first, then the controller
/// output, then the controller and plant state updates:
///
/// ```text
/// y[t]    = C2 x[t] + D22 u[t] + d_y[t]
/// u[t]    = controller(history) + d_u[t]
/// x[t+1]  = A x[t] + B2 u[t] + d_x[t]
/// ```
///
/// A nonzero initial state is modelled as `d_x[-1]`, i.e. shift it into
/// `d_x[0]` and read the response one step later. Perturbation series
/// shorter than `steps + 1` are zero-filled.
pub fn simulate(
    plant: &PlantModel,
    k: &ControllerRealization,
    pert: &Perturbations,
    steps: usize,
) -> Result<SimTrace> {
    let (n, nu, ny) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
    if steps < 1 {
        return Err(SlsError::Domain("simulation needs at least one step".into()));
    }
    if pert.steps() > steps {
        return Err(SlsError::Dimension(format!(
            "perturbations span {} steps, simulation only {steps}",
            pert.steps()
        )));
    }
    let mut pert = pert.clone();
    let fill = |s: &mut Vec<DVector<f64>>, dim: usize| s.resize(steps + 1, DVector::zeros(dim));
    fill(&mut pert.dx, n);
    fill(&mut pert.dy, ny);
    fill(&mut pert.du, nu);
    fill(&mut pert.dbeta, beta_input_dim(plant, k.kind));
    check_series("dx", &pert.dx, n, steps + 1)?;
    check_series("dy", &pert.dy, ny, steps + 1)?;
    check_series("du", &pert.du, nu, steps + 1)?;
    check_series("dbeta", &pert.dbeta, beta_input_dim(plant, k.kind), steps + 1)?;
    if k.response.n_states() != n || k.response.n_inputs() != nu {
        return Err(SlsError::Dimension("realization does not match the plant".into()));
    }

    let (a, b2, c2, d22) = (&plant.a, &plant.b2, &plant.c2, &plant.d22);
    let depth = k.response.horizon() + 2;
    let mut x = DVector::zeros(n);
    let mut trace = SimTrace {
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        beta: Vec::with_capacity(steps + 1),
        dhat: Vec::new(),
        z: Vec::with_capacity(steps + 1),
        perturbations: Perturbations::zeros(plant, k.kind, 0),
    };

    match k.kind {
        ControllerKind::Sf => {
            let mut dhat = History::new(depth);
            for t in 0..=steps {
                let y = &x + &pert.dy[t];
                // newest dhat not yet known: past terms only
                let past = dhat.convolve_delayed(&k.r_bank, 1);
                let d = &y + past;
                dhat.push(d.clone());
                let u = dhat.convolve(&k.m_bank, 0) + &pert.du[t];
                trace.y.push(y);
                trace.beta.push(d.clone());
                trace.dhat.push(d);
                x = step(plant, &mut trace, x, u, &pert.dx[t]);
            }
        }
        ControllerKind::Of | ControllerKind::OfD22 => {
            let n_bank = k.n_bank.as_ref().expect("output-feedback realization");
            let l_bank = k.l_bank.as_ref().expect("output-feedback realization");
            let mut beta = DVector::zeros(n);
            let mut betas = History::new(depth);
            let mut ys = History::new(depth);
            for t in 0..=steps {
                // y - D22 u_c = C2 x + d_y + D22 d_u
                let y = c2 * &x + &pert.dy[t] + d22 * &pert.du[t];
                betas.push(beta.clone());
                ys.push(y.clone());
                let u = betas.convolve(&k.m_bank, 0) + ys.convolve(l_bank, 0) + &pert.du[t];
                let next_beta = betas.convolve(&k.r_bank, 0) + ys.convolve(n_bank, 0) + &pert.dbeta[t];
                trace.y.push(y);
                trace.beta.push(beta);
                beta = next_beta;
                x = step(plant, &mut trace, x, u, &pert.dx[t]);
            }
        }
        ControllerKind::Structure1 => {
            let l = k.response.l.as_ref().expect("output-feedback response");
            let mb2 = k.response.m.right_mul(b2)?;
            let mut ys = History::new(depth);
            let mut ucs = History::new(depth);
            let mut last_uc = DVector::zeros(nu);
            for t in 0..=steps {
                let y = c2 * &x + &pert.dy[t];
                ys.push(y.clone());
                let uc = ys.convolve(l, 0) - ucs.convolve_delayed(&mb2, 1) + &pert.dbeta[t];
                ucs.push(uc.clone());
                trace.beta.push(-(b2 * &last_uc));
                last_uc = uc.clone();
                let u = uc + &pert.du[t];
                trace.y.push(y);
                x = step(plant, &mut trace, x, u, &pert.dx[t]);
            }
        }
        ControllerKind::Structure2 => {
            let l = k.response.l.as_ref().expect("output-feedback response");
            let n_resp = k.response.n.as_ref().expect("output-feedback response");
            let c2n = n_resp.left_mul(c2)?;
            let mut bs = History::new(depth);
            for t in 0..=steps {
                let y = c2 * &x + &pert.dy[t];
                let b = &y + &pert.dbeta[t] - bs.convolve_delayed(&c2n, 1);
                bs.push(b.clone());
                let u = bs.convolve(l, 0) + &pert.du[t];
                trace.y.push(y);
                trace.beta.push(b);
                x = step(plant, &mut trace, x, u, &pert.dx[t]);
            }
        }
        ControllerKind::Imc => {
            let l = k.response.l.as_ref().expect("output-feedback response");
            let mut xm = DVector::zeros(n);
            let mut innov = History::new(depth);
            for t in 0..=steps {
                let y = c2 * &x + &pert.dy[t];
                innov.push(&y - c2 * &xm);
                let uc = innov.convolve(l, 0) + &pert.dbeta[t];
                trace.beta.push(xm.clone());
                xm = a * &xm + b2 * &uc;
                let u = uc + &pert.du[t];
                trace.y.push(y);
                x = step(plant, &mut trace, x, u, &pert.dx[t]);
            }
        }
    }
    if trace.dhat.is_empty() {
        trace.dhat = vec![DVector::zeros(n); steps + 1];
    }
    trace.perturbations = pert;
    Ok(trace)
}

/// Records `x[t]`, `u[t]`, `z[t]` and returns `x[t+1]`.
fn step(
    plant: &PlantModel,
    trace: &mut SimTrace,
    x: DVector<f64>,
    u: DVector<f64>,
    dx: &DVector<f64>,
) -> DVector<f64> {
    let next = &plant.a * &x + &plant.b2 * &u + dx;
    trace.z.push(&plant.c1 * &x + &plant.d12 * &u);
    trace.x.push(x);
    trace.u.push(u);
    next
}
