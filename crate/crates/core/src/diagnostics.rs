//! Quantities read off a solution: the constraint trajectory and its time
//! derivatives, complementarity, multiplier mass, Lipschitz quotients of the
//! control and the value identity.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::CylindricalFunctional;
use crate::grid::{d_dx, integrate, ControlField, MeasurePath, TimeGrid, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::penalized::{CostReport, MultiplierState, PenalizedProblem, PenalizedSolution};

/// `Ψ(m(t_j))` at every node.
pub fn psi_trajectory(psi: &CylindricalFunctional, m: &MeasurePath) -> Vec<f64> {
    let time = m.time();
    (0..time.len()).map(|j| psi.eval(m.at(j), time.t(j))).collect()
}

/// `d/dt Ψ(m(t))` at node `j` from
/// `−∫D_mΨ·D_pH(x, Du) dm + ∫div_x D_mΨ dm`.
pub fn psi_dot(psi: &CylindricalFunctional, spec: &HamiltonianSpec, u: &ValueField, m: &MeasurePath, j: usize) -> f64 {
    let space = m.space();
    let t = m.time().t(j);
    let dm_psi = psi.intrinsic_derivative(m.at(j), t);
    let div = psi.divergence_of_intrinsic(m.at(j), t);
    let du = d_dx(&space, u.row(j));
    let xs = space.nodes();
    let transport: Vec<f64> = (0..space.n_x()).map(|i| -dm_psi[i] * spec.dp(xs[i], du[i]) + div[i]).collect();
    integrate(m.at(j), &transport)
}

/// `∫D_mΨ·D²_ppH(x, Du)·D_mΨ dm(t_j)`: the coefficient of `ν(t)` in the
/// second derivative of `Ψ(m(t))`.
pub fn coercivity(psi: &CylindricalFunctional, spec: &HamiltonianSpec, u: &ValueField, m: &MeasurePath, j: usize) -> f64 {
    let space = m.space();
    let t = m.time().t(j);
    let dm_psi = psi.intrinsic_derivative(m.at(j), t);
    let du = d_dx(&space, u.row(j));
    let xs = space.nodes();
    let q: Vec<f64> = (0..space.n_x()).map(|i| dm_psi[i] * spec.dpp(xs[i], du[i]) * dm_psi[i]).collect();
    integrate(m.at(j), &q)
}

/// Second derivative of `Ψ(m(t))` at interior node `j`, split into the
/// multiplier term `ν(t_j)·coercivity` and the remainder, which is the
/// centered difference of [`psi_dot`] minus that term.
///
/// Refuses nodes where `Ψ(m(t))` changes sign on `[t_{j−1}, t_{j+1}]`.
pub fn psi_ddot_leading(
    psi: &CylindricalFunctional,
    spec: &HamiltonianSpec,
    u: &ValueField,
    m: &MeasurePath,
    mult: &MultiplierState,
    j: usize,
) -> Result<(f64, f64)> {
    let time = m.time();
    if j == 0 || j >= time.n_t() {
        return Err(Error::invalid("second derivative needs an interior node"));
    }
    let vals: Vec<f64> = (j - 1..=j + 1).map(|k| psi.eval(m.at(k), time.t(k))).collect();
    let all_neg = vals.iter().all(|v| *v < 0.0);
    let all_pos = vals.iter().all(|v| *v > 0.0);
    if !(all_neg || all_pos) {
        return Err(Error::invalid(format!(
            "Ψ(m(t)) crosses zero near t = {:.4}; it is only twice differentiable away from its zero set",
            time.t(j)
        )));
    }
    let leading = mult.lambda[j] / mult.epsilon * coercivity(psi, spec, u, m, j);
    let fd = (psi_dot(psi, spec, u, m, j + 1) - psi_dot(psi, spec, u, m, j - 1)) / (2.0 * time.dt());
    Ok((leading, fd - leading))
}

/// `∫ν(t)·max(−Ψ(m(t)) − h, 0) dt + η·max(−Ψ(m(T)) − h, 0)`, trapezoid in
/// time.
pub fn complementarity_residual(time: &TimeGrid, mult: &MultiplierState, psi_series: &[f64], h: f64) -> f64 {
    let nu = mult.nu();
    let integrand: Vec<f64> = nu.iter().zip(psi_series).map(|(n, p)| n * (-p - h).max(0.0)).collect();
    let last = psi_series[psi_series.len() - 1];
    time.trapezoid(&integrand) + mult.eta() * (-last - h).max(0.0)
}

/// `∫ν dt + η`, trapezoid in time.
pub fn multiplier_l1(time: &TimeGrid, mult: &MultiplierState) -> f64 {
    time.trapezoid(&mult.nu()) + mult.eta()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lipschitz {
    pub lip_t: f64,
    pub lip_x: f64,
}

/// Largest difference quotients of `α` between neighbouring nodes in `t`
/// and in `x`.
pub fn control_lipschitz(alpha: &ControlField) -> Lipschitz {
    let time = alpha.time();
    let space = alpha.space();
    let n_x = space.n_x();
    let mut lip_t: f64 = 0.0;
    let mut lip_x: f64 = 0.0;
    for n in 0..time.len() {
        let row = alpha.row(n);
        for i in 0..n_x {
            lip_x = lip_x.max((row[(i + 1) % n_x] - row[i]).abs() / space.dx());
        }
        if n + 1 < time.len() {
            let next = alpha.row(n + 1);
            for i in 0..n_x {
                lip_t = lip_t.max((next[i] - row[i]).abs() / time.dt());
            }
        }
    }
    Lipschitz { lip_t, lip_x }
}

/// Per-step time difference quotients `max_x |α(t_{n+1}) − α(t_n)|/dt`.
pub fn lipschitz_series(alpha: &ControlField) -> Vec<f64> {
    let time = alpha.time();
    (0..time.n_t())
        .map(|n| {
            alpha.row(n + 1).iter().zip(alpha.row(n)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / time.dt()
        })
        .collect()
}

/// Both sides of `∫u(0)dm₀ + ∫f dt + g(m(T)) + penalties = J_{ε,δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueReport {
    pub u0_pairing: f64,
    pub lhs: f64,
    pub j_total: f64,
    pub gap: f64,
}

pub fn value_report(u: &ValueField, m: &MeasurePath, cost: &CostReport) -> ValueReport {
    let u0_pairing = integrate(m.initial(), u.row(0));
    let lhs = u0_pairing + cost.running + cost.terminal + cost.penalty_running + cost.penalty_terminal;
    ValueReport { u0_pairing, lhs, j_total: cost.total, gap: lhs - cost.total }
}

/// Scalar diagnostics of one penalized solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub epsilon: f64,
    pub delta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_fp_gap: f64,
    pub max_psi: f64,
    pub t_max_psi: f64,
    pub psi_terminal: f64,
    pub cost: CostReport,
    pub multiplier_l1: f64,
    pub complementarity: f64,
    pub lipschitz: Lipschitz,
    pub value: ValueReport,
    pub hjb_residual: f64,
    pub bernstein_bound: f64,
    pub bernstein_observed: f64,
    pub bernstein_holds: bool,
    /// `coercivity/ε` at the node of largest `Ψ`: the multiplier term of the
    /// second derivative of `Ψ(m(t))` once the constraint saturates (`λ = 1`).
    pub saturated_leading: f64,
    /// `ν·coercivity` at the same node with the actual multiplier.
    pub leading: Option<f64>,
    /// Second derivative minus `leading`.
    pub remainder: Option<f64>,
}

impl SolveSummary {
    pub fn new(p: &PenalizedProblem, s: &PenalizedSolution) -> Self {
        let time = p.time;
        let psi = p.psi_series(&s.m);
        let (j_star, max_psi) = psi
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (j, v)| if v > a.1 { (j, v) } else { a });
        let j_inner = j_star.clamp(1, time.n_t() - 1);
        let coer = coercivity(p.psi(), &p.hamiltonian, &s.u, &s.m, j_inner);
        let split = psi_ddot_leading(p.psi(), &p.hamiltonian, &s.u, &s.m, &s.mult, j_inner).ok();
        Self {
            epsilon: s.epsilon,
            delta: s.delta,
            converged: s.converged,
            iterations: s.iterations(),
            final_fp_gap: s.history.last().map_or(f64::NAN, |r| r.fp_gap),
            max_psi,
            t_max_psi: time.t(j_star),
            psi_terminal: psi[time.n_t()],
            cost: s.cost,
            multiplier_l1: multiplier_l1(&time, &s.mult),
            complementarity: complementarity_residual(&time, &s.mult, &psi, p.options.smoothing),
            lipschitz: control_lipschitz(&s.alpha),
            value: value_report(&s.u, &s.m, &s.cost),
            hjb_residual: s.hjb_residual,
            bernstein_bound: s.bernstein.bound,
            bernstein_observed: s.bernstein.observed,
            bernstein_holds: s.bernstein.holds,
            saturated_leading: coer / s.epsilon,
            leading: split.map(|v| v.0),
            remainder: split.map(|v| v.1),
        }
    }
}
