//! Alternative output-feedback structures and the controller/Youla series.

use nalgebra::DVector;

use super::sim::{simulate, Perturbations, SimTrace};
use super::{realize, ControllerKind, REALIZATION_TOL};
use crate::error::{Result, SlsError};
use crate::plant::{spectral_radius, PlantModel};
use crate::response::{FirMatrix, SystemResponse};

/// `K = L - zM (zR)^{-1} N` truncated to `h`.
pub fn controller_series(resp: &SystemResponse, h: usize) -> Result<FirMatrix> {
    let (n, l) = resp.require_of()?;
    let zr = resp.r.advance(REALIZATION_TOL)?;
    let zm = resp.m.advance(REALIZATION_TOL)?;
    let inv = zr.series_inverse(h)?;
    let k = l.padded(h).sub(&zm.mul(&inv)?.truncate(h).mul(n)?.truncate(h))?;
    Ok(k.truncate(h))
}

/// `P22 = C2 (zI - A)^{-1} B2 + D22` truncated to `h`.
pub fn plant_series(plant: &PlantModel, h: usize) -> FirMatrix {
    let mut coeffs = vec![plant.d22.clone()];
    let mut ab = plant.b2.clone();
    for _ in 1..=h {
        coeffs.push(&plant.c2 * &ab);
        ab = &plant.a * ab;
    }
    FirMatrix::new(coeffs).expect("uniform shapes")
}

/// `Q = K (I - P22 K)^{-1}` truncated to `h`.
pub fn youla_series(plant: &PlantModel, k: &FirMatrix, h: usize) -> Result<FirMatrix> {
    let p22 = plant_series(plant, h);
    let ny = plant.n_outputs();
    let loop_ = FirMatrix::identity(ny).sub(&p22.mul(k)?.truncate(h))?;
    let inv = loop_.series_inverse(h)?;
    Ok(k.mul(&inv)?.truncate(h))
}

#[derive(Debug, Clone)]
pub struct AltStructureReport {
    pub spectral_radius: f64,
    pub steps: usize,
    /// `|x[t]|_inf` of structure 1 after a unit impulse on its `d_beta`.
    pub structure1_x: Vec<f64>,
    /// Same for structure 2.
    pub structure2_x: Vec<f64>,
    /// `|x[t]|_inf` of the standard output-feedback structure after the
    /// same unit impulse entering as `d_u`.
    pub standard_x: Vec<f64>,
    /// Largest `|x|, |u|, |y|, |beta|` of the standard structure once its
    /// maps have ended.
    pub standard_tail: f64,
    /// Largest difference between IMC and structure 1 in `x, u, y` under
    /// matched perturbations on every channel.
    pub imc_structure1_gap: f64,
}

impl AltStructureReport {
    pub fn structure1_peak(&self) -> f64 {
        self.structure1_x.iter().cloned().fold(0.0, f64::max)
    }

    pub fn structure2_peak(&self) -> f64 {
        self.structure2_x.iter().cloned().fold(0.0, f64::max)
    }
}

fn inf_norms(s: &[DVector<f64>]) -> Vec<f64> {
    s.iter().map(|v| v.amax()).collect()
}

/// Deterministic, nonzero perturbations on the first few steps of every
/// channel.
fn matched_perturbations(plant: &PlantModel, kind: ControllerKind, steps: usize) -> Perturbations {
    let mut p = Perturbations::zeros(plant, kind, steps);
    let active = steps.min(4);
    let wave = |t: usize, i: usize, ch: usize| ((1 + t * 7 + i * 3 + ch * 11) as f64).sin();
    for t in 0..=active {
        for (ch, s) in [&mut p.dx, &mut p.dy, &mut p.du, &mut p.dbeta].into_iter().enumerate() {
            for (i, v) in s[t].iter_mut().enumerate() {
                *v = wave(t, i, ch);
            }
        }
    }
    p
}

fn gap(a: &SimTrace, b: &SimTrace) -> f64 {
    let series = |t: &SimTrace| [t.x.clone(), t.u.clone(), t.y.clone()];
    series(a)
        .iter()
        .zip(series(b).iter())
        .flat_map(|(sa, sb)| sa.iter().zip(sb).map(|(va, vb)| (va - vb).amax()))
        .fold(0.0, f64::max)
}

/// Simulates structures 1 and 2, IMC and the standard output-feedback
/// structure on `plant` for `steps` steps.
pub fn demo_alt_structures(plant: &PlantModel, resp: &SystemResponse, steps: usize) -> Result<AltStructureReport> {
    if plant.has_feedthrough() {
        return Err(SlsError::Unsupported("alternative structures with D22 != 0".into()));
    }
    let rho = spectral_radius(&plant.a)?;
    let s1 = realize(plant, resp, ControllerKind::Structure1)?;
    let s2 = realize(plant, resp, ControllerKind::Structure2)?;
    let imc = realize(plant, resp, ControllerKind::Imc)?;
    let std = realize(plant, resp, ControllerKind::Of)?;

    let mut p1 = Perturbations::zeros(plant, ControllerKind::Structure1, steps);
    p1.dbeta[0][0] = 1.0;
    let t1 = simulate(plant, &s1, &p1, steps)?;

    let mut p2 = Perturbations::zeros(plant, ControllerKind::Structure2, steps);
    p2.dbeta[0][0] = 1.0;
    let t2 = simulate(plant, &s2, &p2, steps)?;

    // structure 1's d_beta is added to the computed input, which is d_u in
    // the standard structure
    let mut p3 = Perturbations::zeros(plant, ControllerKind::Of, steps);
    p3.du[0][0] = 1.0;
    let t3 = simulate(plant, &std, &p3, steps)?;
    let tail_from = resp.horizon() + 2;
    let standard_tail = [&t3.x, &t3.u, &t3.y, &t3.beta]
        .iter()
        .flat_map(|s| s.iter().skip(tail_from).map(|v| v.amax()))
        .fold(0.0, f64::max);

    let pm = matched_perturbations(plant, ControllerKind::Imc, steps);
    let ti = simulate(plant, &imc, &pm, steps)?;
    let ts = simulate(plant, &s1, &pm, steps)?;

    Ok(AltStructureReport {
        spectral_radius: rho,
        steps,
        structure1_x: inf_norms(&t1.x),
        structure2_x: inf_norms(&t2.x),
        standard_x: inf_norms(&t3.x),
        standard_tail,
        imc_structure1_gap: gap(&ti, &ts),
    })
}
