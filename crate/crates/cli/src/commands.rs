use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use sls_core::controller::{realize, simulate, verify_internal_stability, Perturbations, StabilityReport};
use sls_core::response::achievability_residual;
use sls_core::slc::is_qi;
use sls_core::synth::{centralized_baseline, synthesize, ColumnStatus};
use sls_core::{ControllerKind, Mode, PlantModel, SlsError, SynthesisProblem, SynthesisResult, SystemResponse};

use crate::config::{ChannelSpec, Loaded, PerturbationSpec};
use crate::io::{fir_bytes, read_fir, read_pattern, write_atomic};

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone)]
pub struct Globals {
    pub out: PathBuf,
    pub tol: f64,
    pub seed: u64,
}

fn wall_ms(d: Duration, record: bool) -> f64 {
    if record {
        d.as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn baseline(plant: &PlantModel, mode: Mode) -> Option<f64> {
    if mode != Mode::StateFeedback {
        return None;
    }
    match centralized_baseline(plant) {
        Ok(b) => Some(b),
        Err(e) => {
            warn!("no centralized baseline: {e}");
            None
        }
    }
}

fn solve(loaded: &Loaded, plant: &PlantModel, d: Option<usize>, t_c: f64, horizon: usize) -> Result<SynthesisResult> {
    let slc = loaded.slc(plant, d, t_c, horizon)?;
    let problem = SynthesisProblem::new(plant.clone(), slc, loaded.mode())?;
    Ok(synthesize(&problem, &loaded.config.solver.options())?)
}

pub fn write_response(dir: &Path, resp: &SystemResponse) -> Result<()> {
    write_atomic(&dir.join("R.fir"), &fir_bytes(&resp.r))?;
    write_atomic(&dir.join("M.fir"), &fir_bytes(&resp.m))?;
    if let (Some(n), Some(l)) = (&resp.n, &resp.l) {
        write_atomic(&dir.join("N.fir"), &fir_bytes(n))?;
        write_atomic(&dir.join("L.fir"), &fir_bytes(l))?;
    }
    Ok(())
}

pub fn read_response(dir: &Path) -> Result<SystemResponse> {
    let r = read_fir(&dir.join("R.fir"))?;
    let m = read_fir(&dir.join("M.fir"))?;
    let (np, lp) = (dir.join("N.fir"), dir.join("L.fir"));
    let resp = match (np.exists(), lp.exists()) {
        (false, false) => SystemResponse::state_feedback(r, m)?,
        (true, true) => SystemResponse::output_feedback(r, m, read_fir(&np)?, read_fir(&lp)?)?,
        _ => bail!("{}: N.fir and L.fir must be given together", dir.display()),
    };
    Ok(resp)
}

#[derive(Serialize)]
struct Summary {
    status: &'static str,
    mode: &'static str,
    horizon: usize,
    d: Option<usize>,
    t_c: f64,
    cost: f64,
    baseline: Option<f64>,
    normalized_cost: Option<f64>,
    residual: f64,
    columns: usize,
    columns_infeasible: usize,
    wall_time_ms: f64,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::StateFeedback => "state_feedback",
        Mode::OutputFeedback => "output_feedback",
    }
}

pub fn synth(loaded: &Loaded, g: &Globals) -> Result<Outcome> {
    let plant = loaded.plant()?;
    let slc = &loaded.config.slc;
    let res = solve(loaded, &plant, slc.d, slc.t_c, slc.horizon)?;
    let feasible = res.is_feasible();
    let base = baseline(&plant, loaded.mode());
    let summary = Summary {
        status: if feasible { "feasible" } else { "infeasible" },
        mode: mode_name(loaded.mode()),
        horizon: slc.horizon,
        d: slc.d,
        t_c: slc.t_c,
        cost: if feasible { res.cost } else { f64::INFINITY },
        baseline: base,
        normalized_cost: base.map(|b| if feasible { res.cost / b } else { f64::INFINITY }),
        residual: res.residual,
        columns: res.per_column_status.len(),
        columns_infeasible: res.infeasible_count(),
        wall_time_ms: wall_ms(res.wall_time, loaded.config.solver.record_timing),
    };
    write_atomic(&g.out.join("summary.toml"), toml::to_string(&summary)?.as_bytes())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["column", "status", "residual"])?;
    for (j, s) in res.per_column_status.iter().enumerate() {
        let (status, r) = match s {
            ColumnStatus::Feasible => ("feasible", 0.0),
            ColumnStatus::Infeasible { residual } => ("infeasible", *residual),
        };
        w.write_record([j.to_string(), status.to_string(), format!("{r:e}")])?;
    }
    write_atomic(&g.out.join("columns.csv"), &w.into_inner()?)?;

    if feasible {
        write_response(&g.out, &res.response)?;
        say!("feasible: cost {:.6}, residual {:.3e}", res.cost, res.residual);
        if let Some(b) = base {
            say!("normalized cost {:.6} (baseline {:.6})", res.cost / b, b);
        }
        Ok(Outcome::Pass)
    } else {
        say!(
            "infeasible: {} of {} column problems, residual {:.3e}",
            res.infeasible_count(),
            res.per_column_status.len(),
            res.residual
        );
        Ok(Outcome::Fail)
    }
}

pub const SWEEP_HEADER: [&str; 8] = [
    "d",
    "T",
    "t_c",
    "status",
    "cost",
    "normalized_cost",
    "wall_time_ms",
    "columns_infeasible",
];

struct Row {
    d: usize,
    horizon: usize,
    t_c: f64,
    status: String,
    cost: f64,
    wall_ms: f64,
    infeasible: usize,
}

pub fn sweep(loaded: &Loaded, g: &Globals) -> Result<Outcome> {
    let grid = loaded.config.sweep.as_ref().context("config has no [sweep] table")?;
    let plant = loaded.plant()?;
    let base = baseline(&plant, loaded.mode());
    let record = loaded.config.solver.record_timing;

    let mut points = Vec::new();
    for &d in &grid.d {
        for &horizon in &grid.horizon {
            for &t_c in &grid.t_c {
                points.push((d, horizon, t_c));
            }
        }
    }
    let rows: Vec<Row> = points
        .par_iter()
        .map(|&(d, horizon, t_c)| {
            let mut row = Row {
                d,
                horizon,
                t_c,
                status: String::new(),
                cost: f64::INFINITY,
                wall_ms: 0.0,
                infeasible: 0,
            };
            match solve(loaded, &plant, Some(d), t_c, horizon) {
                Ok(res) => {
                    row.wall_ms = wall_ms(res.wall_time, record);
                    row.infeasible = res.infeasible_count();
                    if res.is_feasible() {
                        row.status = "feasible".into();
                        row.cost = res.cost;
                    } else {
                        row.status = "infeasible".into();
                    }
                }
                Err(e) => row.status = format!("error: {e:#}"),
            }
            row
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in &rows {
        let norm = base.map(|b| r.cost / b);
        w.write_record([
            r.d.to_string(),
            r.horizon.to_string(),
            r.t_c.to_string(),
            r.status.clone(),
            r.cost.to_string(),
            norm.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.3}", r.wall_ms),
            r.infeasible.to_string(),
        ])?;
        if norm.is_some_and(|v| v < 1.0 - g.tol) {
            warn!("d={} T={} t_c={}: normalized cost {} below 1", r.d, r.horizon, r.t_c, norm.unwrap());
        }
    }
    write_atomic(&g.out.join("sweep.csv"), &w.into_inner()?)?;

    let violations = monotonicity_violations(&rows, g.tol);
    for v in &violations {
        warn!("monotonicity: {v}");
    }
    let solved = rows.iter().filter(|r| r.status == "feasible").count();
    say!(
        "{} grid points: {solved} feasible, {} monotonicity warnings",
        rows.len(),
        violations.len()
    );
    Ok(Outcome::Pass)
}

/// Cost must not increase with `d` or `T` and must not decrease with `t_c`.
/// Rows with errors are skipped; infeasible rows count as infinite cost.
fn monotonicity_violations(rows: &[Row], tol: f64) -> Vec<String> {
    let usable: Vec<&Row> = rows.iter().filter(|r| !r.status.starts_with("error")).collect();
    let le = |a: f64, b: f64| a <= b || a - b <= tol * (1.0 + b.abs());
    let mut out = Vec::new();
    for a in &usable {
        for b in &usable {
            let looser = a.d <= b.d && a.horizon <= b.horizon && a.t_c >= b.t_c;
            let distinct = (a.d, a.horizon) != (b.d, b.horizon) || a.t_c != b.t_c;
            if looser && distinct && !le(b.cost, a.cost) {
                out.push(format!(
                    "(d={}, T={}, t_c={}) costs {} but tighter (d={}, T={}, t_c={}) costs {}",
                    b.d, b.horizon, b.t_c, b.cost, a.d, a.horizon, a.t_c, a.cost
                ));
            }
        }
    }
    out
}

fn default_kind(plant: &PlantModel, resp: &SystemResponse) -> ControllerKind {
    if !resp.is_output_feedback() {
        ControllerKind::Sf
    } else if plant.has_feedthrough() {
        ControllerKind::OfD22
    } else {
        ControllerKind::Of
    }
}

fn obtain_response(loaded: &Loaded, plant: &PlantModel, dir: Option<&Path>) -> Result<Option<SystemResponse>> {
    if let Some(dir) = dir {
        return Ok(Some(read_response(dir)?));
    }
    let slc = &loaded.config.slc;
    let res = solve(loaded, plant, slc.d, slc.t_c, slc.horizon)?;
    if res.is_feasible() {
        Ok(Some(res.response))
    } else {
        say!("infeasible: residual {:.3e}", res.residual);
        Ok(None)
    }
}

pub fn run_simulation(loaded: &Loaded, g: &Globals, response: Option<&Path>) -> Result<Outcome> {
    let plant = loaded.plant()?;
    let Some(resp) = obtain_response(loaded, &plant, response)? else {
        return Ok(Outcome::Fail);
    };
    let sim = &loaded.config.simulate;
    let kind = sim.kind.map(Into::into).unwrap_or_else(|| default_kind(&plant, &resp));
    let steps = sim.steps.unwrap_or(3 * resp.horizon() + plant.n_states());
    let k = realize(&plant, &resp, kind)?;

    let mut pert = Perturbations::zeros(&plant, kind, steps);
    match sim.perturbation {
        PerturbationSpec::Impulse => {
            let target = match sim.channel {
                ChannelSpec::Dx => &mut pert.dx,
                ChannelSpec::Dy => &mut pert.dy,
                ChannelSpec::Du => &mut pert.du,
                ChannelSpec::Dbeta => &mut pert.dbeta,
            };
            let dim = target[0].len();
            ensure!(sim.coord < dim, "simulate.coord {} out of range for a channel of size {dim}", sim.coord);
            target[0][sim.coord] = sim.amplitude;
        }
        PerturbationSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let a = sim.amplitude.abs();
            for series in [&mut pert.dx, &mut pert.dy, &mut pert.du, &mut pert.dbeta] {
                for v in series.iter_mut().take(sim.active_steps) {
                    *v = DVector::from_fn(v.len(), |_, _| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 });
                }
            }
        }
    }
    let trace = simulate(&plant, &k, &pert, steps)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_atomic(&g.out.join("trace.csv"), &buf)?;
    let peak = trace.x.iter().map(|v| v.amax()).fold(0.0, f64::max);
    info!("simulated {kind:?} for {steps} steps");
    say!("{steps} steps, peak |x| {peak:.6e}, final |x| {:.3e}", trace.x[steps].amax());
    Ok(Outcome::Pass)
}

fn report_text(residual: f64, rep: Option<&StabilityReport>, tol: f64) -> String {
    let mut s = format!("achievability residual {residual:e}\ntolerance {tol:e}\n");
    if let Some(rep) = rep {
        s.push_str(&format!("steps {}\n", rep.steps));
        for ((c, dev), (_, tail)) in rep.max_deviation.iter().zip(&rep.max_tail) {
            s.push_str(&format!("channel {c}: max deviation {dev:e}, max tail {tail:e}\n"));
        }
        for f in &rep.failures {
            s.push_str(&format!("failure {f}\n"));
        }
        s.push_str(if rep.passed { "result PASS\n" } else { "result FAIL\n" });
    } else {
        s.push_str("result FAIL (response not achievable)\n");
    }
    s
}

pub fn verify(loaded: &Loaded, g: &Globals, response: &Path) -> Result<Outcome> {
    let plant = loaded.plant()?;
    let resp = read_response(response)?;
    let residual = achievability_residual(&plant, &resp)?;
    let rep = if residual > g.tol {
        None
    } else {
        match verify_internal_stability(&plant, &resp, g.tol) {
            Ok(r) => Some(r),
            Err(SlsError::NotAchievable { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    };
    let text = report_text(residual, rep.as_ref(), g.tol);
    write_atomic(&g.out.join("verify.txt"), text.as_bytes())?;
    say!("{}", text.trim_end());
    Ok(if rep.is_some_and(|r| r.passed) {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

pub fn qi_check(k: &Path, p: &Path) -> Result<Outcome> {
    let kp = read_pattern(k)?;
    let pp = read_pattern(p)?;
    let qi = is_qi(&kp, &pp)?;
    say!("quadratically invariant: {qi}");
    Ok(if qi { Outcome::Pass } else { Outcome::Fail })
}
