//! Penalized problem: minimize
//! `J(α, m) + (1/ε)∫γ_h(Ψ(m(t)))dt + (1/δ)γ_h(Ψ(m(T)))` over drifts `α`,
//! where `J = ∫∫L(x, α)dm dt + ∫f(t, m(t))dt + g(m(T))` and `γ_h` is the
//! smoothed positive part.
//!
//! The optimality system couples the HJB equation with source
//! `ν(t)·δΨ/δm + δf/δm` and terminal datum `η·δΨ/δm + δg/δm` to the
//! Fokker–Planck equation, through `ν = γ_h′(Ψ(m(t)))/ε` and
//! `η = γ_h′(Ψ(m(T)))/δ`. It is solved by fictitious play.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fokker_planck::solve_forward;
use crate::functionals::{psi_plus, ConstraintSpec, QBasis, Q_MODES, CylindricalFunctional, SmoothPlus};
use crate::grid::{d_dx, integrate, ControlField, GridMeasure, MeasurePath, SpaceGrid, TimeGrid, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::hjb::{bernstein_bound, solve_backward, sup_norm, BernsteinCertificate, BernsteinInputs, HjbProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopOptions {
    pub max_iter: usize,
    /// Bound on `max_t q(m̃_k(t), m̄_k(t))`.
    pub tol_fp: f64,
    /// Bound on the change of `(λ, β)` between rounds.
    pub tol_lambda: f64,
    /// Width `h` of the smoothed positive part.
    pub smoothing: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, tol_fp: 1e-10, tol_lambda: 1e-6, smoothing: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    pub hamiltonian: HamiltonianSpec,
    pub time: TimeGrid,
    pub m0: GridMeasure,
    pub constraint: ConstraintSpec,
    /// Running cost `f(t, m)`.
    pub running: CylindricalFunctional,
    /// Terminal cost `g(m)`.
    pub terminal: CylindricalFunctional,
    pub options: LoopOptions,
}

impl PenalizedProblem {
    pub fn space(&self) -> SpaceGrid {
        self.m0.space()
    }

    pub fn psi(&self) -> &CylindricalFunctional {
        &self.constraint.psi
    }

    /// `Ψ(m(t_j))` for every node.
    pub fn psi_series(&self, m: &MeasurePath) -> Vec<f64> {
        (0..self.time.len()).map(|j| self.psi().eval(m.at(j), self.time.t(j))).collect()
    }
}

/// Penalization strengths with the current multiplier profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierState {
    pub epsilon: f64,
    pub delta: f64,
    /// `λ(t_j) ∈ [0, 1]`.
    pub lambda: Vec<f64>,
    /// `β ∈ [0, 1]`.
    pub beta: f64,
}

impl MultiplierState {
    pub fn new(epsilon: f64, delta: f64, lambda: Vec<f64>, beta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && delta > 0.0) {
            return Err(Error::invalid("penalization strengths must be positive"));
        }
        if lambda.iter().chain(std::iter::once(&beta)).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("multipliers must lie in [0, 1]"));
        }
        Ok(Self { epsilon, delta, lambda, beta })
    }

    pub fn zero(epsilon: f64, delta: f64, n_nodes: usize) -> Result<Self> {
        Self::new(epsilon, delta, vec![0.0; n_nodes], 0.0)
    }

    /// `ν(t_j) = λ(t_j)/ε`.
    pub fn nu(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| l / self.epsilon).collect()
    }

    /// `η = β/δ`.
    pub fn eta(&self) -> f64 {
        self.beta / self.delta
    }
}

/// HJB source at node `j`: `ν(t_j)·δΨ/δm(m(t_j)) + δf/δm(t_j, m(t_j))`.
pub fn assemble_source(p: &PenalizedProblem, m: &MeasurePath, mult: &MultiplierState, j: usize) -> Vec<f64> {
    let t = p.time.t(j);
    let nu = mult.lambda[j] / mult.epsilon;
    let dpsi = p.psi().linear_derivative(m.at(j), t);
    let df = p.running.linear_derivative(m.at(j), t);
    dpsi.iter().zip(&df).map(|(a, b)| nu * a + b).collect()
}

/// Terminal datum `η·δΨ/δm(m_T) + δg/δm(m_T)`.
pub fn assemble_terminal(p: &PenalizedProblem, m_t: &GridMeasure, mult: &MultiplierState) -> Vec<f64> {
    let t = p.time.horizon();
    let dpsi = p.psi().linear_derivative(m_t, t);
    let dg = p.terminal.linear_derivative(m_t, t);
    dpsi.iter().zip(&dg).map(|(a, b)| mult.eta() * a + b).collect()
}

/// `λ(t_j) = γ_h′(Ψ(m(t_j)))` and `β = γ_h′(Ψ(m(T)))`.
pub fn update_multiplier(p: &PenalizedProblem, m: &MeasurePath, epsilon: f64, delta: f64) -> Result<MultiplierState> {
    let gamma = SmoothPlus::new(p.options.smoothing)?;
    let series = p.psi_series(m);
    let lambda: Vec<f64> = series.iter().map(|v| gamma.prime(*v)).collect();
    let beta = lambda[lambda.len() - 1];
    MultiplierState::new(epsilon, delta, lambda, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    /// `Σ_n dt ∫L(x, α(t_n)) dm(t_n)`, one term per step.
    pub kinetic: f64,
    /// `∫f(t, m(t)) dt`.
    pub running: f64,
    /// `g(m(T))`.
    pub terminal: f64,
    /// `J = kinetic + running + terminal`.
    pub j: f64,
    /// `(1/ε)∫Ψ⁺(m(t)) dt`.
    pub penalty_running: f64,
    /// `(1/δ)Ψ⁺(m(T))`.
    pub penalty_terminal: f64,
    /// `J_{ε,δ} = J + penalty_running + penalty_terminal`.
    pub total: f64,
}

/// Costs of the pair `(α, m)`. The kinetic term pairs the drift used on
/// step `n` with the slice at the start of that step; the other time
/// integrals use the trapezoid rule.
pub fn total_cost(p: &PenalizedProblem, alpha: &ControlField, m: &MeasurePath, mult: &MultiplierState) -> Result<CostReport> {
    let time = p.time;
    let space = p.space();
    let xs = space.nodes();
    let mut kinetic = 0.0;
    for n in 0..time.n_t() {
        let a = alpha.row(n);
        let l: Vec<f64> = xs.iter().zip(a).map(|(x, q)| p.hamiltonian.lagrangian(*x, *q)).collect::<Result<_>>()?;
        kinetic += time.dt() * integrate(m.at(n), &l);
    }
    let f_series: Vec<f64> = (0..time.len()).map(|j| p.running.eval(m.at(j), time.t(j))).collect();
    let running = time.trapezoid(&f_series);
    let terminal = p.terminal.eval(m.terminal(), time.horizon());
    let plus: Vec<f64> = p.psi_series(m).iter().map(|v| psi_plus(*v)).collect();
    let penalty_running = time.trapezoid(&plus) / mult.epsilon;
    let penalty_terminal = plus[plus.len() - 1] / mult.delta;
    let j = kinetic + running + terminal;
    Ok(CostReport { kinetic, running, terminal, j, penalty_running, penalty_terminal, total: j + penalty_running + penalty_terminal })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `max_t q(m̃_k(t), m̄_k(t))`.
    pub fp_gap: f64,
    pub multiplier_change: f64,
    pub max_psi: f64,
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub epsilon: f64,
    pub delta: f64,
    /// Value function, with sources and terminal datum normalized against `m`.
    pub u: ValueField,
    pub m: MeasurePath,
    pub alpha: ControlField,
    pub mult: MultiplierState,
    pub cost: CostReport,
    pub history: Vec<RoundRecord>,
    pub converged: bool,
    pub hjb_residual: f64,
    pub bernstein: BernsteinCertificate,
    pub bernstein_inputs: BernsteinInputs,
}

impl PenalizedSolution {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Fictitious play on the optimality system.
///
/// Round `k` computes `(λ, β)` from the averaged path `m̄_k`, solves the HJB
/// equation with the assembled data, and moves `m̄` toward the best response
/// `m̃_k = FP(α_k)` with weight `2/(k+2)`. The loop stops once the best
/// response is within `tol_fp` of `m̄_k` and the multipliers have settled.
/// The returned path is the best response of the last round, so `(u, α, m)`
/// satisfy the discrete system exactly for the reported multipliers.
pub fn solve_penalized(p: &PenalizedProblem, epsilon: f64, delta: f64) -> Result<PenalizedSolution> {
    let time = p.time;
    let opts = p.options;
    let mut m_bar = MeasurePath::constant(time, p.m0.clone());
    let mut prev: Option<MultiplierState> = None;
    let mut history = Vec::new();
    let basis = QBasis::new(p.space(), Q_MODES);

    for k in 0..opts.max_iter.max(1) {
        let mult = update_multiplier(p, &m_bar, epsilon, delta)?;
        let hjb_problem = build_hjb(p, &m_bar, &mult)?;
        let hjb = solve_backward(&hjb_problem).map_err(|e| round_error(k, e))?;
        let m_tilde = solve_forward(&hjb.control, &p.m0).map_err(|e| round_error(k, e))?;

        let fp_gap = (0..time.len()).map(|j| basis.distance(m_tilde.at(j), m_bar.at(j))).fold(0.0, f64::max);
        let multiplier_change = match &prev {
            Some(q) => q.lambda.iter().zip(&mult.lambda).map(|(a, b)| (a - b).abs()).fold((q.beta - mult.beta).abs(), f64::max),
            None => f64::INFINITY,
        };
        let max_psi = p.psi_series(&m_tilde).into_iter().fold(f64::NEG_INFINITY, f64::max);
        history.push(RoundRecord { round: k, fp_gap, multiplier_change, max_psi });

        let converged = fp_gap < opts.tol_fp && multiplier_change < opts.tol_lambda;
        if converged || k + 1 == opts.max_iter.max(1) {
            return finish(p, epsilon, delta, mult, hjb_problem, hjb, m_tilde, history, converged);
        }
        let w = 2.0 / (k as f64 + 2.0);
        m_bar = m_bar.mix(&m_tilde, w);
        prev = Some(mult);
    }
    unreachable!("the loop returns on its last round")
}

fn round_error(k: usize, e: Error) -> Error {
    match e {
        Error::Numerical { step, reason } => Error::Numerical { step, reason: format!("round {k}: {reason}") },
        other => other,
    }
}

fn build_hjb(p: &PenalizedProblem, m: &MeasurePath, mult: &MultiplierState) -> Result<HjbProblem> {
    let rows = (0..p.time.len()).map(|j| assemble_source(p, m, mult, j)).collect();
    let source = ValueField::from_rows(p.time, p.space(), rows)?;
    HjbProblem::new(p.hamiltonian, source, assemble_terminal(p, m.terminal(), mult))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &PenalizedProblem,
    epsilon: f64,
    delta: f64,
    mult: MultiplierState,
    hjb_problem: HjbProblem,
    hjb: crate::hjb::HjbSolution,
    m: MeasurePath,
    history: Vec<RoundRecord>,
    converged: bool,
) -> Result<PenalizedSolution> {
    let time = p.time;
    let dt = time.dt();
    // Shift u by per-time constants so that the sources and terminal datum
    // integrate to zero against the returned path; Du is unchanged.
    let src_shift: Vec<f64> = (0..time.len()).map(|j| -integrate(m.at(j), hjb_problem.source.row(j))).collect();
    let terminal_shift = -integrate(m.terminal(), &hjb_problem.terminal);
    let mut u = hjb.u.clone();
    let mut acc = terminal_shift;
    for c in u.row_mut(time.n_t()) {
        *c += acc;
    }
    for n in (0..time.n_t()).rev() {
        acc += dt * src_shift[n];
        for c in u.row_mut(n) {
            *c += acc;
        }
    }

    let cost = total_cost(p, &hjb.control, &m, &mult)?;
    let bernstein_inputs = penalized_bernstein_inputs(p, &m, &mult);
    let bernstein = bernstein_bound(&hjb, &bernstein_inputs);
    Ok(PenalizedSolution {
        epsilon,
        delta,
        u,
        m,
        alpha: hjb.control.clone(),
        mult,
        cost,
        history,
        converged,
        hjb_residual: hjb.residual,
        bernstein,
        bernstein_inputs,
    })
}

/// Splits the HJB data into the multiplier part `ν·φ`, `η·φ(T)` with
/// `φ = δΨ/δm` and the cost part `ψ = δf/δm`, `g = δg/δm`.
pub fn penalized_bernstein_inputs(p: &PenalizedProblem, m: &MeasurePath, mult: &MultiplierState) -> BernsteinInputs {
    let time = p.time;
    let space = p.space();
    let grad_sup = |v: Vec<f64>| sup_norm(&d_dx(&space, &v));
    let mut d_phi_sup: f64 = 0.0;
    let mut d_psi_sup: f64 = 0.0;
    for j in 0..time.len() {
        let t = time.t(j);
        d_phi_sup = d_phi_sup.max(grad_sup(p.psi().linear_derivative(m.at(j), t)));
        d_psi_sup = d_psi_sup.max(grad_sup(p.running.linear_derivative(m.at(j), t)));
    }
    BernsteinInputs {
        c0: p.hamiltonian.c0,
        horizon: time.horizon(),
        d_phi_sup,
        nu_l1: time.trapezoid(&mult.nu()),
        d_psi_sup,
        eta: mult.eta(),
        d_phi_terminal: grad_sup(p.psi().linear_derivative(m.terminal(), time.horizon())),
        d_g_sup: grad_sup(p.terminal.linear_derivative(m.terminal(), time.horizon())),
    }
}

/// One point of an `(ε, δ)` sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub outcome: std::result::Result<PenalizedSolution, String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Largest `(ε, δ)` such that it and every smaller pair converged with
    /// `max_t Ψ ≤ ctol`.
    pub threshold: Option<(f64, f64)>,
    /// `max |J_i − J_ref| / |J_ref|` over the feasible pairs, with `J_ref`
    /// taken at the smallest pair.
    pub j_spread: Option<f64>,
    pub ctol: f64,
}

/// Solves every pair `(eps[i], deltas[i])`, on up to `jobs` threads. Both
/// lists must be decreasing. Failed solves are recorded and the sweep goes
/// on.
pub fn epsilon_sweep(p: &PenalizedProblem, eps: &[f64], deltas: &[f64], ctol: f64, jobs: usize) -> Result<SweepReport> {
    if eps.len() != deltas.len() || eps.is_empty() {
        return Err(Error::invalid("ε and δ lists must be nonempty and of equal length"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) || deltas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("ε and δ lists must be decreasing"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        eps.par_iter()
            .zip(deltas.par_iter())
            .map(|(&epsilon, &delta)| SweepPoint {
                epsilon,
                delta,
                outcome: solve_penalized(p, epsilon, delta).map_err(|e| e.to_string()),
            })
            .collect()
    });

    let feasible = |pt: &SweepPoint| match &pt.outcome {
        Ok(s) => s.converged && p.psi_series(&s.m).into_iter().fold(f64::NEG_INFINITY, f64::max) <= ctol,
        Err(_) => false,
    };
    let mut threshold = None;
    for pt in points.iter().rev() {
        if !feasible(pt) {
            break;
        }
        threshold = Some((pt.epsilon, pt.delta));
    }
    let j_spread = threshold.and_then(|(e_star, _)| {
        let js: Vec<f64> = points
            .iter()
            .filter(|pt| pt.epsilon <= e_star)
            .filter_map(|pt| pt.outcome.as_ref().ok().map(|s| s.cost.j))
            .collect();
        let reference = *js.last()?;
        Some(js.iter().map(|j| (j - reference).abs()).fold(0.0, f64::max) / reference.abs().max(f64::MIN_POSITIVE))
    });
    Ok(SweepReport { points, threshold, j_spread, ctol })
}
