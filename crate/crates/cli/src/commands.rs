use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;
use wfpc_core::checks::{catalog_drifts, run_checks, CheckReport};
use wfpc_core::config::Config;
use wfpc_core::diagnostics::{lipschitz_series, psi_trajectory, SolveSummary};
use wfpc_core::fokker_planck::solve_forward;
use wfpc_core::functionals::CylindricalFunctional;
use wfpc_core::particles::{ito_check, path_w1, simulate_sde, steering_flow, steering_threshold, w1_envelope};
use wfpc_core::penalized::{epsilon_sweep, solve_penalized, PenalizedProblem, PenalizedSolution};
use wfpc_core::ControlField;

use crate::output::{load, prepare, write_json, write_series, Header};
use crate::{Args, Failure};

fn seed_of(args: &Args, cfg: &Config) -> u64 {
    args.seed.unwrap_or(cfg.particles.seed)
}

/// Ψ(t), ν(t) and the per-step time quotient of α, each in its own file.
fn write_solution_series(dir: &Path, prefix: &str, p: &PenalizedProblem, s: &PenalizedSolution) -> Result<(), Failure> {
    let ts = p.time.nodes();
    write_series(dir, &format!("{prefix}psi.dat"), ("t", "psi"), &ts, &psi_trajectory(p.psi(), &s.m))?;
    write_series(dir, &format!("{prefix}nu.dat"), ("t", "nu"), &ts, &s.mult.nu())?;
    write_series(dir, &format!("{prefix}lip_t.dat"), ("t", "lip_t"), &ts[..p.time.n_t()], &lipschitz_series(&s.alpha))?;
    let rounds: Vec<f64> = s.history.iter().map(|r| r.round as f64).collect();
    let gaps: Vec<f64> = s.history.iter().map(|r| r.fp_gap).collect();
    write_series(dir, &format!("{prefix}fp_gap.dat"), ("round", "fp_gap"), &rounds, &gaps)
}

#[derive(Serialize)]
struct SolveResult {
    summary: SolveSummary,
    beta: f64,
}

pub fn solve(args: &Args) -> Result<(), Failure> {
    let loaded = load(args.config.as_deref())?;
    let cfg = &loaded.config;
    let p = cfg.problem()?;
    prepare(&args.out)?;
    let s = solve_penalized(&p, cfg.penalty.epsilon, cfg.penalty.delta)?;
    let summary = SolveSummary::new(&p, &s);
    write_solution_series(&args.out, "", &p, &s)?;
    let header = Header::new("solve", Some(&loaded), None);
    write_json(&args.out, "solve.json", &header, &SolveResult { summary: summary.clone(), beta: s.mult.beta })?;
    println!(
        "eps={} delta={} converged={} iterations={} max_psi={:.4e} J={:.6} nu_l1={:.4} value_gap={:.2e}",
        s.epsilon, s.delta, s.converged, summary.iterations, summary.max_psi, summary.cost.j, summary.multiplier_l1, summary.value.gap
    );
    if !s.converged {
        return Err(Failure::Solver(format!("fictitious play did not converge in {} rounds", summary.iterations)));
    }
    Ok(())
}

/// One flat sweep row; optional values are empty cells.
#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    delta: f64,
    status: &'static str,
    iterations: Option<usize>,
    max_psi: Option<f64>,
    j: Option<f64>,
    total: Option<f64>,
    multiplier_l1: Option<f64>,
    lip_t: Option<f64>,
    lip_x: Option<f64>,
    complementarity: Option<f64>,
    value_gap: Option<f64>,
    bernstein_observed: Option<f64>,
    bernstein_bound: Option<f64>,
    saturated_leading: Option<f64>,
    leading: Option<f64>,
    remainder: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepEntry {
    epsilon: f64,
    delta: f64,
    status: &'static str,
    error: Option<String>,
    summary: Option<SolveSummary>,
}

#[derive(Serialize)]
struct SweepResult {
    ctol: f64,
    threshold: Option<(f64, f64)>,
    j_spread: Option<f64>,
    points: Vec<SweepEntry>,
}

pub fn sweep(args: &Args) -> Result<(), Failure> {
    let loaded = load(args.config.as_deref())?;
    let cfg = &loaded.config;
    let p = cfg.problem()?;
    prepare(&args.out)?;
    let deltas = cfg.sweep.deltas();
    let report = epsilon_sweep(&p, &cfg.sweep.epsilon, &deltas, cfg.sweep.ctol, args.jobs)?;

    let mut csv = csv::Writer::from_path(args.out.join("sweep.csv")).map_err(|e| Failure::Solver(e.to_string()))?;
    let mut entries = Vec::new();
    let mut failures = 0;
    for pt in &report.points {
        let (status, summary, error) = match &pt.outcome {
            Ok(s) => {
                write_solution_series(&args.out, &format!("eps{}_delta{}_", pt.epsilon, pt.delta), &p, s)?;
                let status = if s.converged { "converged" } else { "not_converged" };
                (status, Some(SolveSummary::new(&p, s)), None)
            }
            Err(e) => ("failed", None, Some(e.clone())),
        };
        failures += usize::from(status != "converged");
        let row = SweepRow {
            epsilon: pt.epsilon,
            delta: pt.delta,
            status,
            iterations: summary.as_ref().map(|s| s.iterations),
            max_psi: summary.as_ref().map(|s| s.max_psi),
            j: summary.as_ref().map(|s| s.cost.j),
            total: summary.as_ref().map(|s| s.cost.total),
            multiplier_l1: summary.as_ref().map(|s| s.multiplier_l1),
            lip_t: summary.as_ref().map(|s| s.lipschitz.lip_t),
            lip_x: summary.as_ref().map(|s| s.lipschitz.lip_x),
            complementarity: summary.as_ref().map(|s| s.complementarity),
            value_gap: summary.as_ref().map(|s| s.value.gap),
            bernstein_observed: summary.as_ref().map(|s| s.bernstein_observed),
            bernstein_bound: summary.as_ref().map(|s| s.bernstein_bound),
            saturated_leading: summary.as_ref().map(|s| s.saturated_leading),
            leading: summary.as_ref().and_then(|s| s.leading),
            remainder: summary.as_ref().and_then(|s| s.remainder),
            error: error.clone(),
        };
        csv.serialize(&row).map_err(|e| Failure::Solver(e.to_string()))?;
        println!(
            "eps={} delta={} {status} max_psi={} J={}",
            pt.epsilon,
            pt.delta,
            row.max_psi.map_or("-".into(), |v| format!("{v:.4e}")),
            row.j.map_or("-".into(), |v| format!("{v:.6}")),
        );
        entries.push(SweepEntry { epsilon: pt.epsilon, delta: pt.delta, status, error, summary });
    }
    csv.flush()?;
    let result = SweepResult { ctol: report.ctol, threshold: report.threshold, j_spread: report.j_spread, points: entries };
    write_json(&args.out, "sweep.json", &Header::new("sweep", Some(&loaded), None), &result)?;
    match report.threshold {
        Some((e, d)) => println!("feasible for all eps <= {e} (delta <= {d}); J spread {:.3e}", report.j_spread.unwrap_or(f64::NAN)),
        None => println!("no feasible tail in the sweep"),
    }
    if failures > 0 {
        return Err(Failure::Solver(format!("{failures} sweep point(s) failed or did not converge")));
    }
    Ok(())
}

#[derive(Serialize)]
struct SteerSeed {
    seed: u64,
    max_psi: f64,
    /// Largest `Ψ − bound − 3·noise`; nonpositive when the bound holds.
    excess_3sigma: f64,
    threshold: f64,
    warning: Option<String>,
}

#[derive(Serialize)]
struct SteerResult {
    c: f64,
    threshold_at_start: f64,
    bound: f64,
    n: usize,
    holds: bool,
    seeds: Vec<SteerSeed>,
}

pub fn steer(args: &Args) -> Result<(), Failure> {
    let loaded = load(args.config.as_deref())?;
    let cfg = &loaded.config;
    let constraint = cfg.constraint()?;
    let m0 = cfg.initial_measure()?;
    let time = cfg.time()?;
    let base = seed_of(args, cfg);
    let start = steering_threshold(&constraint, &m0, 0.0);
    let c = cfg.particles.steer_c.unwrap_or(2.0 * start);
    prepare(&args.out)?;
    let ts = time.nodes();
    let mut seeds = Vec::new();
    for seed in base..base + cfg.particles.steer_seeds as u64 {
        let r = steering_flow(c, &constraint, &m0, time, cfg.particles.n, seed)?;
        if let Some(w) = &r.warning {
            eprintln!("warning (seed {seed}): {w}");
        }
        write_series(&args.out, &format!("psi_seed{seed}.dat"), ("t", "psi"), &ts, &r.psi)?;
        write_series(&args.out, &format!("noise_seed{seed}.dat"), ("t", "noise"), &ts, &r.noise)?;
        let max_psi = r.psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("seed={seed} max_psi={max_psi:.4e} bound={:.4e} excess_3sigma={:.3e}", r.bound, r.excess(3.0));
        seeds.push(SteerSeed { seed, max_psi, excess_3sigma: r.excess(3.0), threshold: r.threshold, warning: r.warning });
    }
    let result = SteerResult {
        c,
        threshold_at_start: start,
        bound: constraint.psi.eval(&m0, 0.0).max(-constraint.eta1),
        n: cfg.particles.n,
        holds: seeds.iter().all(|s| s.excess_3sigma <= 0.0),
        seeds,
    };
    write_json(&args.out, "steer.json", &Header::new("steer", Some(&loaded), Some(base)), &result)
}

#[derive(Serialize)]
struct DriftComparison {
    drift: usize,
    max_w1: f64,
    envelope: f64,
    within: bool,
}

#[derive(Serialize)]
struct ItoResult {
    functional: &'static str,
    drift: f64,
    defect: f64,
}

#[derive(Serialize)]
struct OracleResult {
    n: usize,
    w1: Vec<DriftComparison>,
    ito: Vec<ItoResult>,
}

pub fn oracle(args: &Args) -> Result<(), Failure> {
    let loaded = load(args.config.as_deref())?;
    let cfg = &loaded.config;
    let (time, space) = (cfg.time()?, cfg.space()?);
    let m0 = cfg.initial_measure()?;
    let n = cfg.particles.n;
    let seed = seed_of(args, cfg);
    prepare(&args.out)?;
    let ts = time.nodes();
    let envelope = w1_envelope(&space, n);
    let mut w1 = Vec::new();
    for (i, alpha) in catalog_drifts(time, space).iter().enumerate() {
        let grid = solve_forward(alpha, &m0)?;
        let series = path_w1(&simulate_sde(alpha, &m0, n, seed)?, &grid);
        write_series(&args.out, &format!("w1_drift{i}.dat"), ("t", "w1"), &ts, &series)?;
        let max_w1 = series.iter().copied().fold(0.0, f64::max);
        println!("drift {i}: max W1 {max_w1:.3e} (envelope {envelope:.3e})");
        w1.push(DriftComparison { drift: i, max_w1, envelope, within: max_w1 <= envelope });
    }
    let k = 2.0 * PI / space.length();
    let cosine = space.sample(|x| (k * x).cos());
    let linear = CylindricalFunctional::moment(space, cosine.clone(), 0.0)?;
    let quadratic = CylindricalFunctional::composed(space, cosine, |s| 0.5 * s * s, |s| s, "quadratic")?;
    let mut ito = Vec::new();
    for (name, u, c) in [("cosine_moment", &linear, 0.0), ("quadratic_moment", &quadratic, 1.0)] {
        let alpha = ControlField::constant(time, space, c);
        let defect = ito_check(u, &simulate_sde(&alpha, &m0, n, seed)?, &alpha);
        println!("ito {name} drift {c}: defect {defect:.3e}");
        ito.push(ItoResult { functional: name, drift: c, defect });
    }
    write_json(&args.out, "oracle.json", &Header::new("oracle", Some(&loaded), Some(seed)), &OracleResult { n, w1, ito })
}

pub fn check(args: &Args) -> Result<(), Failure> {
    let loaded = match &args.config {
        Some(path) => Some(load(Some(path))?),
        None => None,
    };
    prepare(&args.out)?;
    let report: CheckReport = run_checks()?;
    for c in &report.checks {
        println!(
            "{} {:<26} worst={:.3e} tol={:.1e} cases={}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.cases
        );
    }
    write_json(&args.out, "check.json", &Header::new("check", loaded.as_ref(), None), &report)?;
    if !report.pass {
        return Err(Failure::Solver("structural invariant suite failed".into()));
    }
    Ok(())
}
