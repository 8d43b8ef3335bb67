use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use wfpc_core::diagnostics::{psi_dot, psi_trajectory, SolveSummary};
use wfpc_core::fokker_planck::solve_forward;
use wfpc_core::functionals::{SmoothPlus, ConstraintSpec, CylindricalFunctional, InnerFunction};
use wfpc_core::hamiltonian::HamiltonianSpec;
use wfpc_core::hjb::{solve_backward, HjbProblem};
use wfpc_core::penalized::{
    assemble_source, assemble_terminal, solve_penalized, total_cost, update_multiplier, LoopOptions, PenalizedProblem,
};
use wfpc_core::{ControlField, GridMeasure, MeasurePath, SpaceGrid, TimeGrid, ValueField};

/// Reward `−w·sin²(πt/T)∫cos(2πx)dm` pulling mass toward `x = 0` against
/// `Ψ = ∫cos(2πx)dm − level`.
fn reward_problem(n_x: usize, n_t: usize, weight: f64, level: f64, h: f64) -> PenalizedProblem {
    let space = SpaceGrid::new(1.0, n_x).unwrap();
    let time = TimeGrid::new(1.0, n_t).unwrap();
    let m0 = GridMeasure::uniform(space);
    let cosine = space.sample(|x| (2.0 * PI * x).cos());
    let psi = CylindricalFunctional::moment(space, cosine.clone(), -level).unwrap();
    let reward: Vec<f64> = cosine.iter().map(|c| -weight * c).collect();
    let running = CylindricalFunctional::new(
        space,
        vec![InnerFunction::Timed(Arc::new(move |t: f64| reward.iter().map(|r| (PI * t).sin().powi(2) * r).collect()))],
        |s| s[0],
        |_| vec![1.0],
        "reward",
    )
    .unwrap();
    PenalizedProblem {
        hamiltonian: HamiltonianSpec::quadratic(1.0),
        time,
        constraint: ConstraintSpec::new(psi, 0.05, 0.1, &m0).unwrap(),
        m0,
        running,
        terminal: CylindricalFunctional::constant(space, 0.0),
        options: LoopOptions { max_iter: 20_000, tol_fp: 1e-10, tol_lambda: 1e-6, smoothing: h },
    }
}

/// Cost of the averaged pair `(m̄, w̄)` along fictitious play, with the
/// drift `w̄/m̄` fed to the kinetic term.
fn averaged_costs(p: &PenalizedProblem, epsilon: f64, rounds: usize) -> Vec<f64> {
    let time = p.time;
    let space = p.space();
    let mut m_bar = MeasurePath::constant(time, p.m0.clone());
    let mut w_bar = ValueField::zeros(time, space);
    let mut costs = Vec::new();
    for k in 0..rounds {
        let mult = update_multiplier(p, &m_bar, epsilon, epsilon).unwrap();
        let rows = (0..time.len()).map(|j| assemble_source(p, &m_bar, &mult, j)).collect();
        let hjb = HjbProblem::new(p.hamiltonian, ValueField::from_rows(time, space, rows).unwrap(), assemble_terminal(p, m_bar.terminal(), &mult)).unwrap();
        let alpha = solve_backward(&hjb).unwrap().control;
        let m = solve_forward(&alpha, &p.m0).unwrap();
        let w = 2.0 / (k as f64 + 2.0);
        m_bar = m_bar.mix(&m, w);
        let rows = (0..time.len())
            .map(|j| {
                let flux = alpha.row(j).iter().zip(m.at(j).density()).map(|(a, d)| a * d);
                w_bar.row(j).iter().zip(flux).map(|(old, new)| (1.0 - w) * old + w * new).collect()
            })
            .collect();
        w_bar = ValueField::from_rows(time, space, rows).unwrap();
        let rows = (0..time.len())
            .map(|j| w_bar.row(j).iter().zip(m_bar.at(j).density()).map(|(f, d)| f / d).collect())
            .collect();
        let drift = ControlField::new(ValueField::from_rows(time, space, rows).unwrap()).unwrap();
        let cost = total_cost(p, &drift, &m_bar, &mult).unwrap();
        let gamma = SmoothPlus::new(p.options.smoothing).unwrap();
        let smoothed: Vec<f64> = p.psi_series(&m_bar).iter().map(|v| gamma.value(*v)).collect();
        costs.push(cost.j + time.trapezoid(&smoothed) / epsilon + smoothed[smoothed.len() - 1] / epsilon);
    }
    costs
}

#[test]
fn averaged_cost_decreases_with_smooth_penalty() {
    let p = reward_problem(32, 100, 15.0, 0.1, 5e-2);
    let costs = averaged_costs(&p, 0.1, 200);
    for (k, w) in costs.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-12, "round {k}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn averaged_cost_rises_stay_within_curvature_allowance() {
    // A sharp penalty kink gives the averaged objective curvature ~ 1/(εh),
    // so a round may overshoot by at most ω_k² times that.
    let epsilon = 0.1;
    for h in [1e-3, 1e-2] {
        let p = reward_problem(32, 100, 15.0, 0.1, h);
        let costs = averaged_costs(&p, epsilon, 200);
        for (k, w) in costs.windows(2).enumerate() {
            let omega = 2.0 / (k as f64 + 3.0);
            let allowance = omega * omega * 1e-4 / (epsilon * h);
            assert!(w[1] - w[0] <= allowance, "h={h} round {k}: rise {} > {allowance}", w[1] - w[0]);
        }
        assert!(costs[costs.len() - 1] < costs[0]);
    }
}

#[test]
fn psi_dot_matches_trajectory_to_first_order_in_dt() {
    let errors: Vec<f64> = [200, 400, 800]
        .iter()
        .map(|&nt| {
            let p = reward_problem(32, nt, 15.0, 0.1, 1e-3);
            let s = solve_penalized(&p, 0.1, 0.1).unwrap();
            assert!(s.converged);
            let traj = psi_trajectory(p.psi(), &s.m);
            let dt = p.time.dt();
            (1..p.time.n_t())
                .map(|j| (psi_dot(p.psi(), &p.hamiltonian, &s.u, &s.m, j) - (traj[j + 1] - traj[j - 1]) / (2.0 * dt)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 0.9, "errors {errors:?}");
    }
    assert!(errors[2] < 0.25, "errors {errors:?}");
}

#[test]
fn multiplier_mass_stays_bounded_as_penalty_sharpens() {
    let p = reward_problem(32, 200, 15.0, 0.1, 1e-3);
    let masses: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&e| {
            let s = solve_penalized(&p, e, e).unwrap();
            assert!(s.converged, "epsilon {e}");
            let m = SolveSummary::new(&p, &s).multiplier_l1;
            assert!(m.is_finite() && m >= 0.0);
            m
        })
        .collect();
    let (lo, hi) = masses.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(*m), hi.max(*m)));
    assert!(hi > 0.0 && hi / lo < 2.0, "masses {masses:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn converged_solutions_satisfy_exclusion(weight in 0.0f64..15.0, level in 0.05f64..0.4, epsilon in 0.05f64..0.5) {
        let h = 1e-3;
        let p = reward_problem(32, 100, weight, level, h);
        let s = solve_penalized(&p, epsilon, epsilon).unwrap();
        prop_assert!(s.converged);
        let psi = p.psi_series(&s.m);
        for (l, v) in s.mult.lambda.iter().zip(&psi) {
            prop_assert!((0.0..=1.0).contains(l));
            if *v <= -h {
                prop_assert_eq!(*l, 0.0);
            }
            if *v >= h {
                prop_assert_eq!(*l, 1.0);
            }
        }
        let summary = SolveSummary::new(&p, &s);
        prop_assert!(summary.complementarity <= 1e-12);
        prop_assert!(summary.value.gap.abs() <= 1e-10 * (1.0 + summary.cost.total.abs()));
    }
}
