//! Predicted closed-loop maps and impulse-response verification.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::sim::{simulate, Perturbations, SimTrace};
use super::{realize, ControllerKind, ControllerRealization, REALIZATION_TOL};
use crate::error::{Result, SlsError};
use crate::plant::PlantModel;
use crate::response::{achievability_residual, FirMatrix, SystemResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Dx,
    Dy,
    Du,
    Dbeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    X,
    U,
    Y,
    Beta,
    DeltaHat,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Channel::Dx => "dx",
            Channel::Dy => "dy",
            Channel::Du => "du",
            Channel::Dbeta => "dbeta",
        };
        f.write_str(s)
    }
}

impl std::fmt::Display for Signal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Signal::X => "x",
            Signal::U => "u",
            Signal::Y => "y",
            Signal::Beta => "beta",
            Signal::DeltaHat => "dhat",
        };
        f.write_str(s)
    }
}

/// Closed-loop maps from perturbation channels to internal signals.
#[derive(Debug, Clone)]
pub struct ClosedLoopMaps {
    pub kind: ControllerKind,
    pub entries: Vec<(Signal, Channel, FirMatrix)>,
}

impl ClosedLoopMaps {
    pub fn get(&self, signal: Signal, channel: Channel) -> Option<&FirMatrix> {
        self.entries
            .iter()
            .find(|(s, c, _)| *s == signal && *c == channel)
            .map(|(_, _, m)| m)
    }

    pub fn channels(&self) -> Vec<Channel> {
        let mut out: Vec<Channel> = self.entries.iter().map(|e| e.1).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn signals(&self) -> Vec<Signal> {
        let mut out: Vec<Signal> = self.entries.iter().map(|e| e.0).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn max_horizon(&self) -> usize {
        self.entries.iter().map(|e| e.2.horizon()).max().unwrap_or(0)
    }
}

fn c(m: &DMatrix<f64>) -> FirMatrix {
    FirMatrix::constant(m.clone())
}

fn mul(a: &FirMatrix, b: &FirMatrix) -> Result<FirMatrix> {
    a.mul(b)
}

/// Every map of the closed loop, in spectral components. Output feedback
/// gives sixteen maps over `(x, u, y, beta) <- (dx, dy, du, dbeta)` with
/// `y` the measurement seen by the controller; state feedback gives nine
/// over `(x, u, dhat) <- (dx, dy, du)`.
pub fn predicted_maps(plant: &PlantModel, resp: &SystemResponse) -> Result<ClosedLoopMaps> {
    let residual = achievability_residual(plant, resp)?;
    if residual > REALIZATION_TOL {
        return Err(SlsError::NotAchievable { residual });
    }
    let resp = resp.padded();
    let (a, b2) = (c(&plant.a), c(&plant.b2));
    let n = plant.n_states();
    let nu = plant.n_inputs();
    let r = &resp.r;
    let m = &resp.m;

    let (Some(nn), Some(l)) = (&resp.n, &resp.l) else {
        // state feedback
        let zr = r.advance(REALIZATION_TOL)?;
        let zm = m.advance(REALIZATION_TOL)?;
        let x_dy = zr.sub(&mul(r, &a)?)?.sub(&FirMatrix::identity(n))?;
        let u_dy = zm.sub(&mul(m, &a)?)?;
        let entries = vec![
            (Signal::X, Channel::Dx, r.clone()),
            (Signal::X, Channel::Dy, x_dy),
            (Signal::X, Channel::Du, mul(r, &b2)?),
            (Signal::U, Channel::Dx, m.clone()),
            (Signal::U, Channel::Dy, u_dy),
            (Signal::U, Channel::Du, FirMatrix::identity(nu).add(&mul(m, &b2)?)?),
            (Signal::DeltaHat, Channel::Dx, FirMatrix::delayed(DMatrix::identity(n, n), 1)),
            (
                Signal::DeltaHat,
                Channel::Dy,
                FirMatrix::identity(n).sub(&a.shift(1))?,
            ),
            (Signal::DeltaHat, Channel::Du, b2.shift(1)),
        ];
        return Ok(ClosedLoopMaps {
            kind: ControllerKind::Sf,
            entries,
        });
    };

    let (c2, d22) = (c(&plant.c2), c(&plant.d22));
    let ny = plant.n_outputs();
    let feedthrough = plant.has_feedthrough();
    let rb2 = mul(r, &b2)?;
    let mb2 = mul(m, &b2)?;
    let nc2 = mul(nn, &c2)?;
    let lc2 = mul(l, &c2)?;
    let c2r = mul(&c2, r)?;
    let c2n = mul(&c2, nn)?;

    let x_du = if feedthrough { rb2.add(&mul(nn, &d22)?)? } else { rb2.clone() };
    let u_du_inner = if feedthrough { mb2.add(&mul(l, &d22)?)? } else { mb2.clone() };
    let u_du = FirMatrix::identity(nu).add(&u_du_inner)?;
    let y_du = mul(&c2, &x_du)?;
    let y_du = if feedthrough { y_du.add(&d22)? } else { y_du };
    let beta_dbeta = FirMatrix::delayed(DMatrix::identity(n, n), 1)
        .sub(&a.add(&mul(&b2, &lc2)?)?.shift(2))?;

    let entries = vec![
        (Signal::X, Channel::Dx, r.clone()),
        (Signal::X, Channel::Dy, nn.clone()),
        (Signal::X, Channel::Du, x_du),
        (Signal::X, Channel::Dbeta, nc2.shift(1)),
        (Signal::U, Channel::Dx, m.clone()),
        (Signal::U, Channel::Dy, l.clone()),
        (Signal::U, Channel::Du, u_du),
        (Signal::U, Channel::Dbeta, lc2.shift(1)),
        (Signal::Y, Channel::Dx, c2r),
        (Signal::Y, Channel::Dy, FirMatrix::identity(ny).add(&c2n)?),
        (Signal::Y, Channel::Du, y_du),
        (Signal::Y, Channel::Dbeta, mul(&c2n, &c2)?.shift(1)),
        (Signal::Beta, Channel::Dx, mul(&b2, m)?.shift(1).scale(-1.0)),
        (Signal::Beta, Channel::Dy, mul(&b2, l)?.shift(1).scale(-1.0)),
        (Signal::Beta, Channel::Du, mul(&b2, &u_du_inner)?.shift(1).scale(-1.0)),
        (Signal::Beta, Channel::Dbeta, beta_dbeta),
    ];
    Ok(ClosedLoopMaps {
        kind: if feedthrough { ControllerKind::OfD22 } else { ControllerKind::Of },
        entries,
    })
}

/// H2 norm of the maps from the controller-state perturbation to every
/// internal signal. Only defined for output feedback.
pub fn robustness_metric(plant: &PlantModel, resp: &SystemResponse) -> Result<f64> {
    let maps = predicted_maps(plant, resp)?;
    if maps.kind == ControllerKind::Sf {
        return Err(SlsError::Precondition(
            "robustness metric needs an output-feedback response".into(),
        ));
    }
    let sq: f64 = maps
        .entries
        .iter()
        .filter(|e| e.1 == Channel::Dbeta)
        .map(|e| e.2.frobenius_sq())
        .sum();
    Ok(sq.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityFailure {
    pub channel: Channel,
    pub signal: Signal,
    pub coordinate: usize,
    pub time: usize,
    pub deviation: f64,
}

impl std::fmt::Display for StabilityFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} <- {}[{}] at t={}: deviation {:.3e}",
            self.signal, self.channel, self.coordinate, self.time, self.deviation
        )
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub passed: bool,
    pub steps: usize,
    pub tol: f64,
    /// Largest deviation from the predicted coefficients per channel.
    pub max_deviation: Vec<(Channel, f64)>,
    /// Largest magnitude seen after the predicted horizon per channel.
    pub max_tail: Vec<(Channel, f64)>,
    /// First offending time index per (channel, signal, coordinate).
    pub failures: Vec<StabilityFailure>,
}

fn series<'a>(trace: &'a SimTrace, signal: Signal) -> &'a [DVector<f64>] {
    match signal {
        Signal::X => &trace.x,
        Signal::U => &trace.u,
        Signal::Y => &trace.y,
        Signal::Beta => &trace.beta,
        Signal::DeltaHat => &trace.dhat,
    }
}

struct CoordOutcome {
    channel: Channel,
    deviation: f64,
    tail: f64,
    failures: Vec<StabilityFailure>,
}

/// Injects a unit impulse on every coordinate of every channel, simulates
/// `3T + n` steps and compares each trace with the predicted maps. Values
/// past a map's horizon must stay within `tol` of zero.
pub fn verify_internal_stability(plant: &PlantModel, resp: &SystemResponse, tol: f64) -> Result<StabilityReport> {
    let maps = predicted_maps(plant, resp)?;
    let k = realize(plant, resp, maps.kind)?;
    let steps = 3 * resp.horizon() + plant.n_states();
    verify_maps(plant, &k, &maps, steps, tol)
}

/// Compares simulated impulse responses of `k` with arbitrary `maps`.
pub fn verify_maps(
    plant: &PlantModel,
    k: &ControllerRealization,
    maps: &ClosedLoopMaps,
    steps: usize,
    tol: f64,
) -> Result<StabilityReport> {
    let kind = k.kind;

    let mut jobs = Vec::new();
    for ch in maps.channels() {
        let dim = maps
            .entries
            .iter()
            .find(|e| e.1 == ch)
            .map(|e| e.2.cols())
            .unwrap_or(0);
        jobs.extend((0..dim).map(|j| (ch, j)));
    }

    let outcomes: Vec<CoordOutcome> = jobs
        .par_iter()
        .map(|&(ch, j)| -> Result<CoordOutcome> {
            let pert = Perturbations::impulse(plant, kind, steps, ch, j);
            let trace = simulate(plant, k, &pert, steps)?;
            let mut out = CoordOutcome {
                channel: ch,
                deviation: 0.0,
                tail: 0.0,
                failures: Vec::new(),
            };
            for (sig, _, map) in maps.entries.iter().filter(|e| e.1 == ch) {
                let got = series(&trace, *sig);
                let mut first: Option<StabilityFailure> = None;
                for (t, v) in got.iter().enumerate() {
                    let dev = if t <= map.horizon() {
                        (v - map.coeffs()[t].column(j)).amax()
                    } else {
                        let mag = v.amax();
                        out.tail = out.tail.max(mag);
                        mag
                    };
                    out.deviation = out.deviation.max(dev);
                    if !(dev <= tol) && first.is_none() {
                        first = Some(StabilityFailure {
                            channel: ch,
                            signal: *sig,
                            coordinate: j,
                            time: t,
                            deviation: dev,
                        });
                    }
                }
                out.failures.extend(first);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut max_deviation: Vec<(Channel, f64)> = maps.channels().into_iter().map(|c| (c, 0.0)).collect();
    let mut max_tail = max_deviation.clone();
    let mut failures = Vec::new();
    for o in outcomes {
        for (c, d) in max_deviation.iter_mut() {
            if *c == o.channel {
                *d = d.max(o.deviation);
            }
        }
        for (c, d) in max_tail.iter_mut() {
            if *c == o.channel {
                *d = d.max(o.tail);
            }
        }
        failures.extend(o.failures);
    }
    Ok(StabilityReport {
        passed: failures.is_empty(),
        steps,
        tol,
        max_deviation,
        max_tail,
        failures,
    })
}
