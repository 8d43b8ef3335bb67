//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Tolerances are the constants at the top of each block.

mod oracles;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use wfpc_core::checks::catalog_drifts;
use wfpc_core::config::Config;
use wfpc_core::diagnostics::SolveSummary;
use wfpc_core::fokker_planck::{adjointness_check, solve_forward};
use wfpc_core::functionals::CylindricalFunctional;
use wfpc_core::hamiltonian::HamiltonianSpec;
use wfpc_core::hjb::{default_radius, heat_semigroup_picard, solve_backward, HjbProblem};
use wfpc_core::particles::{ito_check, path_w1, simulate_sde, steering_flow, steering_threshold, w1_envelope};
use wfpc_core::penalized::{epsilon_sweep, PenalizedProblem, PenalizedSolution, SweepReport};
use wfpc_core::{ControlField, GridMeasure, SpaceGrid, TimeGrid, ValueField};

struct Line {
    pass: bool,
    text: String,
}

fn line(pass: bool, text: String) -> Line {
    Line { pass, text }
}

fn config(name: &str) -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::from_toml(&std::fs::read_to_string(&path).expect("config file")).expect("valid config")
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn orders(errs: &[f64], base: f64) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).ln() / base.ln()).collect()
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

// ---------------------------------------------------------------- 1

fn hjb_error(n_x: usize, n_t: usize, horizon: f64) -> f64 {
    let space = SpaceGrid::new(1.0, n_x).unwrap();
    let time = TimeGrid::new(horizon, n_t).unwrap();
    let g = space.sample(|x| (2.0 * PI * x).cos());
    let p = HjbProblem::new(HamiltonianSpec::quadratic(1.0), ValueField::zeros(time, space), g.clone()).unwrap();
    let sol = solve_backward(&p).unwrap();
    (0..time.len())
        .map(|n| sup_diff(sol.u.row(n), &oracles::cole_hopf(&g, 1.0, horizon - time.t(n))))
        .fold(0.0, f64::max)
}

fn fp_error(n_x: usize, n_t: usize, horizon: f64, c: f64) -> f64 {
    let space = SpaceGrid::new(1.0, n_x).unwrap();
    let time = TimeGrid::new(horizon, n_t).unwrap();
    let m0 = space.sample(|x| 1.0 + (2.0 * PI * x).cos());
    let path = solve_forward(&ControlField::constant(time, space, c), &GridMeasure::new(space, m0.clone()).unwrap()).unwrap();
    (0..time.len())
        .map(|j| sup_diff(path.at(j).density(), &oracles::drift_heat(&m0, 1.0, c, time.t(j))))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Line {
    const DX_ORDER: f64 = 1.8;
    const DT_ORDER: f64 = 0.9;
    const FINEST: f64 = 1e-3;
    const HORIZON: f64 = 0.02;
    let dx_levels = [16, 32, 64];
    let dt_levels = [128, 256, 512];
    let cases: [(&str, Box<dyn Fn(usize, usize) -> f64>); 3] = [
        ("cole-hopf", Box::new(|nx, nt| hjb_error(nx, nt, HORIZON))),
        ("heat", Box::new(|nx, nt| fp_error(nx, nt, HORIZON, 0.0))),
        ("drift", Box::new(|nx, nt| fp_error(nx, nt, HORIZON, 2.0))),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, err) in &cases {
        let ex: Vec<f64> = dx_levels.iter().map(|&nx| err(nx, 4096)).collect();
        let et: Vec<f64> = dt_levels.iter().map(|&nt| err(256, nt)).collect();
        let (ox, ot) = (orders(&ex, 2.0), orders(&et, 2.0));
        pass &= ox.iter().all(|o| *o >= DX_ORDER) && ot.iter().all(|o| *o >= DT_ORDER);
        pass &= ex[2] < FINEST && et[2] < FINEST;
        parts.push(format!(
            "{name}: dx orders {:.2}/{:.2} (finest {:.1e}), dt orders {:.2}/{:.2} (finest {:.1e})",
            ox[0], ox[1], ex[2], ot[0], ot[1], et[2]
        ));
    }
    line(pass, format!("solver oracles, need dx ≥ {DX_ORDER}, dt ≥ {DT_ORDER}, finest < {FINEST:.0e}; {}", parts.join("; ")))
}

// ---------------------------------------------------------- sweep-based

struct Sweep {
    problem: PenalizedProblem,
    report: SweepReport,
}

impl Sweep {
    fn converged(&self) -> Vec<(&PenalizedSolution, SolveSummary)> {
        self.report
            .points
            .iter()
            .filter_map(|pt| pt.outcome.as_ref().ok())
            .filter(|s| s.converged)
            .map(|s| (s, SolveSummary::new(&self.problem, s)))
            .collect()
    }

    fn feasible(&self) -> Vec<(&PenalizedSolution, SolveSummary)> {
        let Some((e_star, _)) = self.report.threshold else { return vec![] };
        self.converged().into_iter().filter(|(s, _)| s.epsilon <= e_star).collect()
    }
}

fn run_sweep() -> Sweep {
    let cfg = config("active.toml");
    let problem = cfg.problem().unwrap();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = epsilon_sweep(&problem, &cfg.sweep.epsilon, &cfg.sweep.deltas(), cfg.sweep.ctol, jobs).unwrap();
    Sweep { problem, report }
}

fn criterion_2(sw: &Sweep) -> Line {
    const GAP: f64 = 1e-4;
    const ADJOINT: f64 = 1e-10;
    let pts = sw.converged();
    let worst_gap = pts.iter().map(|(_, m)| m.value.gap.abs() / (1.0 + m.value.j_total.abs())).fold(0.0, f64::max);
    let worst_adj = pts.iter().map(|(s, _)| adjointness_check(&s.alpha)).fold(0.0, f64::max);
    let pass = !pts.is_empty() && worst_gap <= GAP && worst_adj <= ADJOINT;
    line(
        pass,
        format!(
            "value identity on {} converged solves: max relative gap {worst_gap:.2e} (≤ {GAP:.0e}), adjointness {worst_adj:.2e} (≤ {ADJOINT:.0e})",
            pts.len()
        ),
    )
}

fn criterion_3(sw: &Sweep) -> Line {
    const SPREAD: f64 = 1e-3;
    let r = &sw.report;
    let rows: Vec<String> = r
        .points
        .iter()
        .map(|pt| match &pt.outcome {
            Ok(s) => format!("ε={} maxΨ={:.2e} J={:.5}", pt.epsilon, SolveSummary::new(&sw.problem, s).max_psi, s.cost.j),
            Err(e) => format!("ε={} failed: {e}", pt.epsilon),
        })
        .collect();
    let pass = r.threshold.is_some() && r.j_spread.is_some_and(|s| s < SPREAD);
    line(
        pass,
        format!(
            "penalized sweep: ε* = {:?} with max Ψ ≤ {}, J spread {:.2e} (< {SPREAD:.0e}); {}",
            r.threshold.map(|t| t.0),
            r.ctol,
            r.j_spread.unwrap_or(f64::NAN),
            rows.join(", ")
        ),
    )
}

fn criterion_4(sw: &Sweep) -> Line {
    const TOL: f64 = 1e-4;
    let pts = sw.converged();
    let worst = pts.iter().map(|(_, m)| m.complementarity).fold(0.0, f64::max);
    line(!pts.is_empty() && worst <= TOL, format!("complementarity on {} solves: max {worst:.2e} (≤ {TOL:.0e})", pts.len()))
}

fn criterion_5(sw: &Sweep) -> Line {
    const RATIO: f64 = 2.0;
    const SLOPE: f64 = 0.2;
    let pts = sw.feasible();
    let eps: Vec<f64> = pts.iter().map(|(s, _)| s.epsilon).collect();
    let mass: Vec<f64> = pts.iter().map(|(_, m)| m.multiplier_l1).collect();
    let (lo, hi) = (mass.iter().copied().fold(f64::INFINITY, f64::min), mass.iter().copied().fold(0.0, f64::max));
    let slope = if pts.len() >= 2 { loglog_slope(&eps, &mass) } else { f64::NAN };
    let pass = pts.len() >= 2 && lo > 0.0 && hi / lo < RATIO && slope.abs() <= SLOPE;
    line(
        pass,
        format!(
            "multiplier mass ∫ν+η over feasible ε {eps:?}: {mass:.4?}, max/min {:.3} (< {RATIO}), log-log slope {slope:.3} (|·| ≤ {SLOPE})",
            hi / lo
        ),
    )
}

fn criterion_6(sw: &Sweep) -> Line {
    const FACTOR: f64 = 2.0;
    let pts = sw.feasible();
    let mut lip: Vec<f64> = pts.iter().map(|(_, m)| m.lipschitz.lip_t).collect();
    let shown = lip.clone();
    lip.sort_by(f64::total_cmp);
    let median = if lip.is_empty() { f64::NAN } else { lip[lip.len() / 2] };
    let pass = !lip.is_empty() && lip.iter().all(|v| *v <= FACTOR * median);
    line(pass, format!("lip_t(α) over feasible sweep: {shown:.4?}, median {median:.4}, none above {FACTOR}× median"))
}

fn criterion_7(sw: &Sweep) -> Line {
    const SLOPE: (f64, f64) = (-1.2, -0.8);
    const BAND: f64 = 2.0;
    let pts = sw.converged();
    let eps: Vec<f64> = pts.iter().map(|(s, _)| s.epsilon).collect();
    let sat: Vec<f64> = pts.iter().map(|(_, m)| m.saturated_leading).collect();
    let rem: Vec<Option<f64>> = pts.iter().map(|(_, m)| m.remainder).collect();
    let literal: Vec<Option<f64>> = pts.iter().map(|(_, m)| m.leading).collect();
    let slope = loglog_slope(&eps, &sat);
    let rems: Vec<f64> = rem.iter().flatten().copied().collect();
    let same_sign = rems.iter().all(|r| *r < 0.0) || rems.iter().all(|r| *r > 0.0);
    let (lo, hi) = rems.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.abs()), b.max(r.abs())));
    let literal_slope = if literal.iter().all(|v| v.is_some_and(|x| x > 0.0)) {
        loglog_slope(&eps, &literal.iter().map(|v| v.unwrap()).collect::<Vec<_>>())
    } else {
        f64::NAN
    };
    let pass = pts.len() >= 3
        && (SLOPE.0..=SLOPE.1).contains(&slope)
        && rems.len() == pts.len()
        && same_sign
        && hi / lo <= BAND;
    line(
        pass,
        format!(
            "second derivative of Ψ at argmax over ε {eps:?}: saturated coercive term {sat:.1?} slope {slope:.3} (in [{}, {}]); remainder {rems:.1?} band ratio {:.3} (≤ {BAND}); actual-multiplier term slope {literal_slope:.3}",
            SLOPE.0,
            SLOPE.1,
            hi / lo
        ),
    )
}

fn picard_case(p: &HjbProblem) -> (f64, f64, bool) {
    let space = p.space();
    let time = p.source.time();
    let march = solve_backward(p).unwrap();
    let report = heat_semigroup_picard(p, default_radius(p)).unwrap();
    let diff = sup_diff(march.u.data(), report.solution.u.data());
    let tol = 10.0 * (space.dx().powi(2) + time.dt());
    (diff, tol, report.converged)
}

fn criterion_11(sw: &Sweep) -> Line {
    let pts = sw.converged();
    let held = pts.iter().filter(|(_, m)| m.bernstein_holds).count();
    let ratios: Vec<String> = pts.iter().map(|(_, m)| format!("{:.1e}", m.bernstein_observed / m.bernstein_bound)).collect();

    let space = SpaceGrid::new(1.0, 64).unwrap();
    let time = TimeGrid::new(0.25, 400).unwrap();
    let g = space.sample(|x| (2.0 * PI * x).cos());
    let cole_hopf = HjbProblem::new(HamiltonianSpec::quadratic(1.0), ValueField::zeros(time, space), g).unwrap();
    let space = SpaceGrid::new(1.0, 32).unwrap();
    let time = TimeGrid::new(0.5, 400).unwrap();
    let spec = HamiltonianSpec::catalog(0.3, 0.2, 0.5, 0.2, 1.0).unwrap();
    let source = ValueField::from_fn(time, space, |t, x| (1.0 + t) * (2.0 * PI * x).sin());
    let catalog = HjbProblem::new(spec, source, space.sample(|x| 0.5 * (4.0 * PI * x).cos())).unwrap();
    let cases = [picard_case(&cole_hopf), picard_case(&catalog)];
    let pass = !pts.is_empty() && held == pts.len() && cases.iter().all(|(d, t, c)| *c && d <= t);
    line(
        pass,
        format!(
            "Bernstein bound held on {held}/{} sweep solves (observed/bound {}); Picard vs march: {:.2e} ≤ {:.2e}, {:.2e} ≤ {:.2e}",
            pts.len(),
            ratios.join(", "),
            cases[0].0,
            cases[0].1,
            cases[1].0,
            cases[1].1
        ),
    )
}

// ---------------------------------------------------------- particles

fn criterion_8() -> Line {
    const SIGMAS: f64 = 3.0;
    let cfg = config("steer.toml");
    let constraint = cfg.constraint().unwrap();
    let m0 = cfg.initial_measure().unwrap();
    let time = cfg.time().unwrap();
    let threshold = steering_threshold(&constraint, &m0, 0.0);
    let c = cfg.particles.steer_c.unwrap_or(2.0 * threshold);
    let seeds = cfg.particles.seed..cfg.particles.seed + cfg.particles.steer_seeds as u64;
    let mut worst = f64::NEG_INFINITY;
    let mut warned = false;
    for seed in seeds.clone() {
        let r = steering_flow(c, &constraint, &m0, time, cfg.particles.n, seed).unwrap();
        worst = worst.max(r.excess(SIGMAS));
        warned |= r.warning.is_some();
    }
    let control = steering_flow(0.0, &constraint, &m0, time, cfg.particles.n, cfg.particles.seed).unwrap();
    let control_excess = control.excess(SIGMAS);
    let pass = c > threshold && !warned && worst <= 0.0 && control_excess > 0.0;
    line(
        pass,
        format!(
            "steering with C = {c:.3} (threshold {threshold:.3}) over {} seeds: max of Ψ − max(Ψ(m₀), −η₁) − {SIGMAS}σ is {worst:.2e} (≤ 0); C = 0 control exceeds by {control_excess:.2e}",
            seeds.count()
        ),
    )
}

fn criterion_9() -> Line {
    const DEFECT: f64 = 5e-3;
    const HALVING: (f64, f64) = (1.6, 2.5);
    const SEEDS: u64 = 8;
    let cfg = config("particles.toml");
    let space = cfg.space().unwrap();
    let m0 = cfg.initial_measure().unwrap();
    let (horizon, n_t, n) = (cfg.grid.horizon, cfg.grid.n_t, cfg.particles.n);
    let k = 2.0 * PI / space.length();
    let cosine = space.sample(|x| (k * x).cos());
    let linear = CylindricalFunctional::moment(space, cosine.clone(), 0.0).unwrap();
    let quadratic = CylindricalFunctional::composed(space, cosine, |s| 0.5 * s * s, |s| s, "quadratic").unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, u, c) in [("∫cos dm, α = 0", &linear, 0.0), ("½(∫cos dm)², α = 1", &quadratic, 1.0)] {
        let mean_defect = |n_t: usize, n: usize| -> (f64, f64) {
            let time = TimeGrid::new(horizon, n_t).unwrap();
            let alpha = ControlField::constant(time, space, c);
            let d: Vec<f64> = (0..SEEDS).map(|s| ito_check(u, &simulate_sde(&alpha, &m0, n, s).unwrap(), &alpha)).collect();
            (d.iter().sum::<f64>() / SEEDS as f64, d.iter().copied().fold(0.0, f64::max))
        };
        let (fine, fine_max) = mean_defect(n_t, n);
        let (coarse, _) = mean_defect(n_t / 2, n / 4);
        let ratio = coarse / fine;
        pass &= fine_max <= DEFECT && (HALVING.0..=HALVING.1).contains(&ratio);
        parts.push(format!("{name}: worst {fine_max:.2e}, mean {fine:.2e}, coarse/fine {ratio:.2}"));
    }
    line(
        pass,
        format!(
            "Itô defect at dt = {:.0e}, N = {n} over {SEEDS} seeds (≤ {DEFECT:.0e}, ratio in [{}, {}] from (2dt, N/4)): {}",
            horizon / n_t as f64,
            HALVING.0,
            HALVING.1,
            parts.join("; ")
        ),
    )
}

fn criterion_10() -> Line {
    const SEED: u64 = 2026;
    let time = TimeGrid::new(0.1, 800).unwrap();
    let mut worst_ratio: f64 = 0.0;
    let mut cases = 0;
    for n_x in [32, 128] {
        let space = SpaceGrid::new(1.0, n_x).unwrap();
        let m0 = GridMeasure::from_weights(space, space.sample(|x| (3.0 * (2.0 * PI * x).cos()).exp())).unwrap();
        for alpha in catalog_drifts(time, space) {
            let grid = solve_forward(&alpha, &m0).unwrap();
            for n in [1_000, 10_000, 100_000] {
                let w = path_w1(&simulate_sde(&alpha, &m0, n, SEED).unwrap(), &grid).into_iter().fold(0.0, f64::max);
                worst_ratio = worst_ratio.max(w / w1_envelope(&space, n));
                cases += 1;
            }
        }
    }
    line(
        worst_ratio <= 1.0,
        format!("particle vs grid W₁ over {cases} (drift, n_x, N) cases, all time nodes: worst W₁/envelope {worst_ratio:.3} (≤ 1)"),
    )
}

// ---------------------------------------------------------- 12

fn criterion_12() -> Line {
    let base = std::env::temp_dir().join(format!("wfpc-acceptance-{}", std::process::id()));
    let run = |dir: &PathBuf| {
        Command::new(env!("CARGO_BIN_EXE_wfpc")).args(["check", "--out"]).arg(dir).output().expect("run wfpc check")
    };
    let (a, b) = (base.join("a"), base.join("b"));
    let first = run(&a);
    let second = run(&b);
    let read = |d: &PathBuf| std::fs::read(d.join("check.json")).unwrap_or_default();
    let identical = !read(&a).is_empty() && read(&a) == read(&b);
    let stdout = String::from_utf8_lossy(&first.stdout);
    let passed = stdout.lines().filter(|l| l.starts_with("PASS")).count();
    let failed = stdout.lines().filter(|l| l.starts_with("FAIL")).count();
    let _ = std::fs::remove_dir_all(&base);
    line(
        first.status.success() && second.status.success() && failed == 0 && passed > 0 && identical,
        format!("`wfpc check`: exit {:?}, {passed} checks passed, {failed} failed, rerun output identical: {identical}", first.status.code()),
    )
}

fn main() {
    let start = Instant::now();
    let mut lines: Vec<(usize, Line)> = Vec::new();
    let mut record = |id: usize, l: Line| {
        println!("[{id:>2}] {} {} ({:.0?})", if l.pass { "PASS" } else { "FAIL" }, l.text, start.elapsed());
        lines.push((id, l));
    };
    record(1, criterion_1());
    let sweep = run_sweep();
    record(2, criterion_2(&sweep));
    record(3, criterion_3(&sweep));
    record(4, criterion_4(&sweep));
    record(5, criterion_5(&sweep));
    record(6, criterion_6(&sweep));
    record(7, criterion_7(&sweep));
    record(8, criterion_8());
    record(9, criterion_9());
    record(10, criterion_10());
    record(11, criterion_11(&sweep));
    record(12, criterion_12());
    lines.sort_by_key(|(id, _)| *id);
    let failed: Vec<usize> = lines.iter().filter(|(_, l)| !l.pass).map(|(id, _)| *id).collect();
    println!("acceptance: {} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
