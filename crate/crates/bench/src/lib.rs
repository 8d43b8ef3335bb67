//! Shared fixtures for the criterion benches.

use std::f64::consts::PI;

use wfpc_core::functionals::{ConstraintSpec, CylindricalFunctional};
use wfpc_core::hamiltonian::HamiltonianSpec;
use wfpc_core::hjb::HjbProblem;
use wfpc_core::penalized::{LoopOptions, PenalizedProblem};
use wfpc_core::{ControlField, GridMeasure, SpaceGrid, TimeGrid, ValueField};

pub fn grids(n_x: usize, n_t: usize) -> (SpaceGrid, TimeGrid) {
    (SpaceGrid::new(1.0, n_x).unwrap(), TimeGrid::new(1.0, n_t).unwrap())
}

/// Catalog Hamiltonian with a cosine source and terminal datum.
pub fn hjb_problem(n_x: usize, n_t: usize) -> HjbProblem {
    let (space, time) = grids(n_x, n_t);
    let h = HamiltonianSpec::catalog(0.3, 0.2, 0.5, 0.2, 1.0).unwrap();
    let source = ValueField::from_fn(time, space, |t, x| (1.0 + t) * (2.0 * PI * x).sin());
    HjbProblem::new(h, source, space.sample(|x| 0.5 * (4.0 * PI * x).cos())).unwrap()
}

pub fn drift(n_x: usize, n_t: usize) -> ControlField {
    let (space, time) = grids(n_x, n_t);
    ControlField::new(ValueField::from_fn(time, space, |t, x| 2.0 * (2.0 * PI * (x - t)).sin())).unwrap()
}

pub fn bumped(space: SpaceGrid) -> GridMeasure {
    GridMeasure::new(space, space.sample(|x| 1.0 + 0.8 * (2.0 * PI * x).cos())).unwrap()
}

/// Quadratic Hamiltonian, uniform start, `Ψ = ∫cos(2πx)dm − 0.1` and a
/// terminal reward on the same moment.
pub fn penalized_problem(n_x: usize, n_t: usize, max_iter: usize) -> PenalizedProblem {
    let (space, time) = grids(n_x, n_t);
    let m0 = GridMeasure::uniform(space);
    let cosine = space.sample(|x| (2.0 * PI * x).cos());
    let psi = CylindricalFunctional::moment(space, cosine.clone(), -0.1).unwrap();
    PenalizedProblem {
        hamiltonian: HamiltonianSpec::quadratic(1.0),
        time,
        constraint: ConstraintSpec::new(psi, 0.05, 0.1, &m0).unwrap(),
        m0,
        running: CylindricalFunctional::constant(space, 0.0),
        terminal: CylindricalFunctional::affine(space, vec![cosine], vec![-2.0], 0.0).unwrap(),
        options: LoopOptions { max_iter, ..LoopOptions::default() },
    }
}
