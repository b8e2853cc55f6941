//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the timing criteria are not disturbed by concurrently running tests.

mod common;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{controllable_observable, dense_sf_oracle, deadbeat_oracle, of_plant, rand_matrix, sf_plant};
use sls_core::controller::{controller_series, demo_alt_structures, verify_internal_stability, youla_series};
use sls_core::plant::{benchmark_chain, build_chain, hop_distances, spectral_radius};
use sls_core::response::{compose_output_feedback, is_t_step_controllable, is_t_step_observable, of_residual};
use sls_core::slc::is_qi;
use sls_core::synth::{centralized_baseline, synthesize_of_h2, synthesize_sf_h2};
use sls_core::{FirMatrix, Mode, PlantModel, SlcSet, SupportMask, SynthesisProblem, SynthesisResult, SystemResponse};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sf_solve(plant: &PlantModel, slc: SlcSet) -> SynthesisResult {
    let problem = SynthesisProblem::new(plant.clone(), slc, Mode::StateFeedback).unwrap();
    synthesize_sf_h2(&problem).unwrap()
}

fn of_solve(plant: &PlantModel, horizon: usize) -> SynthesisResult {
    let slc = SlcSet::fir(plant, Mode::OutputFeedback, horizon);
    let problem = SynthesisProblem::new(plant.clone(), slc, Mode::OutputFeedback).unwrap();
    synthesize_of_h2(&problem).unwrap()
}

/// Normalized cost of one grid point, `+inf` when any column is infeasible.
fn grid_point(plant: &PlantModel, baseline: f64, d: usize, horizon: usize, t_c: f64) -> f64 {
    let g = hop_distances(plant);
    let slc = SlcSet::spatiotemporal(plant, &g, Some(d), t_c, Mode::StateFeedback, horizon).unwrap();
    let res = sf_solve(plant, slc);
    if res.is_feasible() {
        res.cost / baseline
    } else {
        f64::INFINITY
    }
}

fn example_one_recovery() -> Outcome {
    let n = 100;
    let plant = build_chain(n, 1.0, 1.1, &(1..=n).collect::<Vec<_>>(), 0.0).unwrap();
    let start = Instant::now();
    let support = |i: usize, j: usize| i == j || plant.a[(i, j)] != 0.0;
    let r = SupportMask::from_fn(n, n, 1, |t, i, j| t == 1 && support(i, j));
    let m = SupportMask::from_fn(n, n, 1, |t, i, j| t == 1 && support(i, j));
    let slc = SlcSet::subspace(r, m, None, None, "support(A) + diag").unwrap();
    let res = sf_solve(&plant, slc);
    let elapsed = start.elapsed();
    let m_err = (res.response.m.coeff(1) + &plant.a).amax();
    let r_err = (res.response.r.coeff(1) - DMatrix::<f64>::identity(n, n)).amax();
    outcome(
        res.is_feasible() && m_err <= 1e-8 && r_err <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("n={n}: |M[1]+A|={m_err:.1e}, |R[1]-I|={r_err:.1e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn headline_point() -> Outcome {
    let plant = benchmark_chain();
    let baseline = centralized_baseline(&plant).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let start = Instant::now();
    let norm = pool.install(|| grid_point(&plant, baseline, 5, 15, 0.0));
    let elapsed = start.elapsed();
    outcome(
        norm <= 1.01 && elapsed < Duration::from_secs(60),
        format!("(d,T)=(5,15): normalized cost {norm:.6}, {:.2} s on 4 threads", elapsed.as_secs_f64()),
    )
}

fn tradeoff_monotone() -> Outcome {
    let plant = benchmark_chain();
    let baseline = centralized_baseline(&plant).unwrap();
    let ds = [1, 3, 5, 7, 9, 99];
    let ts = [5, 10, 15, 20, 30];
    let grid: Vec<Vec<f64>> = ds
        .iter()
        .map(|&d| ts.iter().map(|&t| grid_point(&plant, baseline, d, t, 0.0)).collect())
        .collect();
    let slack = 1e-9;
    let mut violations = Vec::new();
    for (i, row) in grid.iter().enumerate() {
        for j in 0..ts.len() {
            if j + 1 < ts.len() && row[j + 1] > row[j] + slack {
                violations.push(format!("T {}->{} at d={}", ts[j], ts[j + 1], ds[i]));
            }
            if i + 1 < ds.len() && grid[i + 1][j] > row[j] + slack {
                violations.push(format!("d {}->{} at T={}", ds[i], ds[i + 1], ts[j]));
            }
        }
    }
    let far = grid_point(&plant, baseline, 99, 200, 0.0);
    let infeasible = grid.iter().flatten().filter(|v| v.is_infinite()).count();
    outcome(
        violations.is_empty() && (far - 1.0).abs() <= 1e-3,
        format!(
            "{} grid points ({infeasible} infeasible), {} violations{}, (99,200) normalized {far:.8}",
            ds.len() * ts.len(),
            violations.len(),
            violations.first().map(|v| format!(" [{v}]")).unwrap_or_default()
        ),
    )
}

fn delay_degradation() -> Outcome {
    let plant = benchmark_chain();
    let baseline = centralized_baseline(&plant).unwrap();
    let mut costs = Vec::new();
    let mut fallback = false;
    for t_c in [0.0, 0.5, 0.9] {
        let mut c = grid_point(&plant, baseline, 8, 20, t_c);
        if c.is_infinite() && t_c == 0.9 {
            fallback = true;
            c = grid_point(&plant, baseline, 13, 20, t_c);
        }
        costs.push(c);
    }
    let feasible = costs.iter().all(|c| c.is_finite());
    let nondecreasing = costs.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let degradation = costs[2] / costs[0] - 1.0;
    outcome(
        feasible && nondecreasing && degradation <= 0.05,
        format!(
            "normalized {:.6} / {:.6} / {:.6} at t_c = 0 / 0.5 / 0.9{}, degradation {:.2}%",
            costs[0],
            costs[1],
            costs[2],
            if fallback { " (13,20 at 0.9)" } else { "" },
            100.0 * degradation
        ),
    )
}

fn table_one() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_dev = 0.0_f64;
    let mut worst_tail = 0.0_f64;
    let mut failed = Vec::new();
    for case in 0..50 {
        let n = rng.gen_range(1..=4);
        let nu = rng.gen_range(1..=2);
        let ny = rng.gen_range(1..=2);
        // deadbeat output feedback needs a controller and an observer horizon
        let horizon = rng.gen_range(2 * n..=10);
        let (a, b2, c2) = controllable_observable(&mut rng, n, nu, ny);
        let plant = of_plant(a, b2, c2);
        let res = of_solve(&plant, horizon);
        if !res.is_feasible() {
            failed.push(format!("case {case} infeasible"));
            continue;
        }
        match verify_internal_stability(&plant, &res.response, 1e-8) {
            Ok(rep) => {
                worst_dev = rep.max_deviation.iter().map(|x| x.1).fold(worst_dev, f64::max);
                worst_tail = rep.max_tail.iter().map(|x| x.1).fold(worst_tail, f64::max);
                if !rep.passed {
                    failed.push(format!("case {case}: {}", rep.failures[0]));
                }
            }
            Err(e) => failed.push(format!("case {case}: {e}")),
        }
    }
    outcome(
        failed.is_empty(),
        format!(
            "50 plants, worst map deviation {worst_dev:.1e}, worst tail {worst_tail:.1e}{}",
            failed.first().map(|f| format!(" [{f}]")).unwrap_or_default()
        ),
    )
}

/// Max entry of the output-feedback achievability defects, computed
/// directly from the recursions.
fn of_defect_oracle(plant: &PlantModel, resp: &SystemResponse) -> f64 {
    let (a, b2, c2) = (&plant.a, &plant.b2, &plant.c2);
    let (r, m) = (&resp.r, &resp.m);
    let (nn, l) = (resp.n.as_ref().unwrap(), resp.l.as_ref().unwrap());
    let h = resp.horizon() + 1;
    let n = a.nrows();
    let mut worst = (r.coeff(0).amax()).max(m.coeff(0).amax()).max(nn.coeff(0).amax());
    worst = worst.max((r.coeff(1) - DMatrix::<f64>::identity(n, n)).amax());
    worst = worst.max((nn.coeff(1) - b2 * l.coeff(0)).amax());
    worst = worst.max((m.coeff(1) - l.coeff(0) * c2).amax());
    for t in 1..=h {
        worst = worst.max((r.coeff(t + 1) - a * r.coeff(t) - b2 * m.coeff(t)).amax());
        worst = worst.max((nn.coeff(t + 1) - a * nn.coeff(t) - b2 * l.coeff(t)).amax());
        worst = worst.max((r.coeff(t + 1) - r.coeff(t) * a - nn.coeff(t) * c2).amax());
        worst = worst.max((m.coeff(t + 1) - m.coeff(t) * a - l.coeff(t) * c2).amax());
    }
    worst
}

fn composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0_f64;
    let mut worst_oracle = 0.0_f64;
    let mut errors = Vec::new();
    for case in 0..100 {
        let n = rng.gen_range(1..=4);
        let nu = rng.gen_range(1..=2);
        let ny = rng.gen_range(1..=2);
        let (a, b2, c2) = controllable_observable(&mut rng, n, nu, ny);
        let plant = of_plant(a.clone(), b2.clone(), c2.clone());
        let sf = is_t_step_controllable(&a, &b2, n).unwrap().witness;
        let (_, _, est) = is_t_step_observable(&a, &c2, n).unwrap();
        let (Some(sf), Some(est)) = (sf, est) else {
            errors.push(format!("case {case}: no deadbeat witness"));
            continue;
        };
        match compose_output_feedback(&plant, &sf, &est) {
            Ok(resp) => {
                worst = worst.max(of_residual(&plant, &resp).unwrap());
                worst_oracle = worst_oracle.max(of_defect_oracle(&plant, &resp));
            }
            Err(e) => errors.push(format!("case {case}: {e}")),
        }
    }
    outcome(
        errors.is_empty() && worst <= 1e-10 && worst_oracle <= 1e-10,
        format!(
            "100 plants, worst residual {worst:.1e} (direct check {worst_oracle:.1e}){}",
            errors.first().map(|e| format!(" [{e}]")).unwrap_or_default()
        ),
    )
}

fn controllability_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut disagree = Vec::new();
    let mut yes = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=5);
        let nu = rng.gen_range(1..=2);
        let horizon = rng.gen_range(1..=6);
        let a = rand_matrix(&mut rng, n, n);
        let b2 = rand_matrix(&mut rng, n, nu);
        let got = is_t_step_controllable(&a, &b2, horizon).unwrap().feasible;
        let want = deadbeat_oracle(&a, &b2, horizon);
        yes += want as usize;
        if got != want {
            disagree.push(format!("case {case} (n={n}, nu={nu}, T={horizon}): solver {got}, rank {want}"));
        }
    }
    outcome(
        disagree.is_empty(),
        format!(
            "200 pairs ({yes} controllable), {} disagreements{}",
            disagree.len(),
            disagree.first().map(|d| format!(" [{d}]")).unwrap_or_default()
        ),
    )
}

fn instability_demo() -> Outcome {
    let one = || DMatrix::from_element(1, 1, 1.0);
    let plant = of_plant(DMatrix::from_element(1, 1, 1.1), one(), one());
    let horizon = 4;
    let res = of_solve(&plant, horizon);
    if !res.is_feasible() {
        return outcome(false, "scalar design infeasible");
    }
    let rep = demo_alt_structures(&plant, &res.response, 100).unwrap();
    // x[0] is zero for every causal loop, so growth is checked from t = 1
    let growth_ok = (1..=100).all(|t| rep.structure1_x[t] >= 0.9 * 1.1f64.powi(t as i32));
    let tail = rep.standard_x[horizon + 1..].iter().cloned().fold(0.0, f64::max);
    outcome(
        growth_ok && tail <= 1e-12,
        format!(
            "|x[100]| = {:.4e} (bound {:.4e}); standard structure max |x[t]| for t > T: {tail:.1e}",
            rep.structure1_x[100],
            0.9 * 1.1f64.powi(100)
        ),
    )
}

/// Impulse response from `y` to `u` of the output-feedback controller with
/// the plant removed, stepped directly from the response.
fn controller_impulse(resp: &SystemResponse, ny: usize, h: usize) -> FirMatrix {
    let (r, m) = (&resp.r, &resp.m);
    let (nn, l) = (resp.n.as_ref().unwrap(), resp.l.as_ref().unwrap());
    let n = r.rows();
    let nu = m.rows();
    let mut coeffs = vec![DMatrix::zeros(nu, ny); h + 1];
    for j in 0..ny {
        let mut betas: Vec<DVector<f64>> = Vec::new();
        let mut beta = DVector::zeros(n);
        for t in 0..=h {
            betas.push(beta.clone());
            let mut u = DVector::zeros(nu);
            let mut next = DVector::zeros(n);
            for (k, b) in betas.iter().rev().enumerate() {
                u += m.coeff(k + 1) * b;
                next -= r.coeff(k + 2) * b;
            }
            // the unit measurement at t = 0 is seen through L[t] and N[t+1]
            u += l.coeff(t).column(j);
            next -= nn.coeff(t + 1).column(j);
            coeffs[t].set_column(j, &u);
            beta = next;
        }
    }
    FirMatrix::new(coeffs).unwrap()
}

fn imc_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_gap = 0.0_f64;
    let mut worst_l = 0.0_f64;
    let mut worst_k = 0.0_f64;
    for _ in 0..10 {
        let n = rng.gen_range(1..=3);
        let (mut a, b2, c2) = controllable_observable(&mut rng, n, 1, 1);
        a *= 0.5 / spectral_radius(&a).unwrap();
        let plant = of_plant(a, b2, c2);
        let horizon = 2 * n + 2;
        let res = of_solve(&plant, horizon);
        if !res.is_feasible() {
            return outcome(false, "stable design infeasible");
        }
        let resp = &res.response;
        let rep = demo_alt_structures(&plant, resp, 60).unwrap();
        worst_gap = worst_gap.max(rep.imc_structure1_gap);
        let h = 3 * horizon;
        let k = controller_series(resp, h).unwrap();
        worst_k = worst_k.max(k.max_abs_diff(&controller_impulse(resp, 1, h)).unwrap());
        let q = youla_series(&plant, &k, h).unwrap();
        worst_l = worst_l.max(q.max_abs_diff(&resp.l.as_ref().unwrap().padded(h)).unwrap());
    }
    outcome(
        worst_gap <= 1e-8 && worst_l <= 1e-6 && worst_k <= 1e-8,
        format!("10 plants, IMC gap {worst_gap:.1e}, |Q - L| {worst_l:.1e}, K series vs stepped controller {worst_k:.1e}"),
    )
}

fn column_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0_f64;
    let mut mismatched = Vec::new();
    let mut feasible = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=3);
        let nu = rng.gen_range(1..=2);
        let horizon = rng.gen_range(1..=10);
        let plant = sf_plant(rand_matrix(&mut rng, n, n), rand_matrix(&mut rng, n, nu));
        let rbits: Vec<bool> = (0..(horizon + 1) * n * n).map(|_| rng.gen_bool(0.8)).collect();
        let mbits: Vec<bool> = (0..(horizon + 1) * nu * n).map(|_| rng.gen_bool(0.8)).collect();
        let r = SupportMask::from_fn(n, n, horizon, |t, i, j| t > 0 && (i == j || rbits[(t * n + i) * n + j]));
        let m = SupportMask::from_fn(nu, n, horizon, |t, i, j| t > 0 && mbits[(t * nu + i) * n + j]);
        let slc = SlcSet::subspace(r.clone(), m.clone(), None, None, "random").unwrap();
        let res = sf_solve(&plant, slc);
        let oracle = dense_sf_oracle(&plant, &r, &m);
        let oracle_feasible = oracle.residual <= 1e-8;
        if res.is_feasible() != oracle_feasible {
            mismatched.push(format!("case {case}: feasibility differs (oracle residual {:.1e})", oracle.residual));
            continue;
        }
        if oracle_feasible {
            feasible += 1;
            let d = res
                .response
                .r
                .max_abs_diff(&oracle.response.r)
                .unwrap()
                .max(res.response.m.max_abs_diff(&oracle.response.m).unwrap());
            worst = worst.max(d);
        }
    }
    outcome(
        mismatched.is_empty() && worst <= 1e-7,
        format!(
            "100 instances ({feasible} feasible), worst difference {worst:.1e}{}",
            mismatched.first().map(|m| format!(" [{m}]")).unwrap_or_default()
        ),
    )
}

/// QI by definition: for every `K` in the pattern, `K P K` stays in the
/// pattern. With generic entries this reduces to Boolean path checks.
fn qi_brute(k: &DMatrix<bool>, p: &DMatrix<bool>) -> bool {
    let (nu, ny) = k.shape();
    (0..nu).all(|i| {
        (0..ny).all(|j| {
            k[(i, j)] || !(0..ny).any(|a| (0..nu).any(|b| k[(i, a)] && p[(a, b)] && k[(b, j)]))
        })
    })
}

fn qi_checker() -> Outcome {
    let mut ok = true;
    let mut checked = 0;
    for size in 1..=6 {
        let lower = DMatrix::from_fn(size, size, |i, j| i >= j);
        let diag = DMatrix::from_fn(size, size, |i, j| i == j);
        // cycle through all nodes: strongly connected
        let cycle = DMatrix::from_fn(size, size, |i, j| j == (i + 1) % size);
        let full = DMatrix::from_element(size, size, true);
        for (k, p, want) in [
            (&lower, &lower, true),
            (&diag, &cycle, size == 1),
            (&diag, &full, size == 1),
        ] {
            let got = is_qi(k, p).unwrap();
            ok &= got == want && got == qi_brute(k, p);
            checked += 1;
        }
    }
    outcome(ok, format!("{checked} pattern pairs, sizes 1..=6"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("example-1 recovery", example_one_recovery),
        ("headline (5,15) point", headline_point),
        ("tradeoff monotonicity", tradeoff_monotone),
        ("delay degradation", delay_degradation),
        ("closed-loop table", table_one),
        ("response composition", composition),
        ("controllability oracle", controllability_oracle),
        ("instability demonstration", instability_demo),
        ("IMC equivalence", imc_equivalence),
        ("column vs dense oracle", column_oracle),
        ("QI checker", qi_checker),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {id:>2} {name}: {} ({:.2} s)",
            out.detail,
            start.elapsed().as_secs_f64()
        );
        failures += !out.pass as usize;
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
