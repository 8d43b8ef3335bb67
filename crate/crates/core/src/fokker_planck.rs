//! Forward Fokker–Planck equation `∂_t m + div(αm) − Δm = 0`.
//!
//! Each step is the transpose of the linearized HJB step of
//! [`crate::stepper`], with the drift and diffusion split stored in the
//! [`ControlField`]. Mass is conserved by the flux form; any drift beyond
//! round-off is reported rather than corrected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{d_dx, laplacian, pairing, ControlField, GridMeasure, MeasurePath, SpaceGrid, ValueField, NEGATIVITY_TOL};
use crate::stepper;

/// Largest tolerated change of total mass over one step.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

/// Marches `m₀` forward under the drift `α`; step `n` uses row `n` of `α`.
pub fn solve_forward(alpha: &ControlField, m0: &GridMeasure) -> Result<MeasurePath> {
    let time = alpha.time();
    let space = alpha.space();
    if m0.space() != space {
        return Err(Error::invalid("initial measure and control live on different grids"));
    }
    if !alpha.values().is_finite() {
        return Err(Error::invalid("drift must be finite"));
    }
    let dt = time.dt();
    let mut slices = Vec::with_capacity(time.len());
    slices.push(m0.clone());
    let mut m = m0.density().to_vec();
    for n in 0..time.n_t() {
        let before = m.iter().sum::<f64>() * space.dx();
        m = stepper::primal_step(&space, dt, alpha.split()[n], alpha.row(n), &m);
        let after = m.iter().sum::<f64>() * space.dx();
        if (after - before).abs() > MASS_DRIFT_TOL {
            return Err(Error::numerical(n, format!("mass drift {:.3e} in one step", after - before)));
        }
        if let Some(min) = m.iter().copied().reduce(f64::min) {
            if min < -NEGATIVITY_TOL {
                return Err(Error::numerical(n, format!("negative density {min:.3e}")));
            }
            if !min.is_finite() {
                return Err(Error::numerical(n, "non-finite density"));
            }
        }
        slices.push(GridMeasure::new(space, m.clone())?);
    }
    MeasurePath::new(time, slices)
}

/// Defect of `∫u dm(t₂) − ∫u dm(t₁) = ∫_{t₁}^{t₂}∫[∂_t u + α·Du + Δu] dm dt`
/// on the grid, with `t₁, t₂` rounded to the nearest nodes. The time
/// integral is the midpoint rule on each interval with the slice values
/// averaged.
pub fn weak_form_residual(path: &MeasurePath, alpha: &ControlField, u_test: &ValueField, t1: f64, t2: f64) -> f64 {
    let time = path.time();
    let space = path.space();
    let dt = time.dt();
    let node = |t: f64| ((t / dt).round().max(0.0) as usize).min(time.n_t());
    let (j1, j2) = (node(t1.min(t2)), node(t1.max(t2)));
    let lhs = pairing(&space, path.at(j2).density(), u_test.row(j2)) - pairing(&space, path.at(j1).density(), u_test.row(j1));
    let generator = |j: usize, a: &[f64]| -> Vec<f64> {
        let u = u_test.row(j);
        let grad = d_dx(&space, u);
        let lap = laplacian(&space, u);
        (0..space.n_x()).map(|i| a[i] * grad[i] + lap[i]).collect()
    };
    let mut rhs = 0.0;
    for n in j1..j2 {
        let a = alpha.row(n);
        let dtu: Vec<f64> = u_test.row(n + 1).iter().zip(u_test.row(n)).map(|(b, c)| (b - c) / dt).collect();
        let (g0, g1) = (generator(n, a), generator(n + 1, a));
        let (m0, m1) = (path.at(n).density(), path.at(n + 1).density());
        let integrand: Vec<f64> = (0..space.n_x())
            .map(|i| dtu[i] * 0.5 * (m0[i] + m1[i]) + 0.5 * (g0[i] * m0[i] + g1[i] * m1[i]))
            .collect();
        rhs += dt * integrand.iter().sum::<f64>() * space.dx();
    }
    lhs - rhs
}

/// Maximum over random pairs `(m, u)` of
/// `|⟨FP_step(m), u⟩ − ⟨m, HJB_step(u)⟩| / dt` for every step of `α`.
pub fn adjointness_check(alpha: &ControlField) -> f64 {
    adjointness_defect(alpha, stepper::primal_step)
}

type PrimalStep = fn(&SpaceGrid, f64, f64, &[f64], &[f64]) -> Vec<f64>;

/// Same as [`adjointness_check`] with a caller-supplied forward step.
pub fn adjointness_defect(alpha: &ControlField, primal: PrimalStep) -> f64 {
    let time = alpha.time();
    let space = alpha.space();
    let dt = time.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for n in 0..time.n_t() {
        let theta = alpha.split()[n];
        for _ in 0..4 {
            let m: Vec<f64> = (0..space.n_x()).map(|_| rng.random::<f64>()).collect();
            let u: Vec<f64> = (0..space.n_x()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = pairing(&space, &primal(&space, dt, theta, alpha.row(n), &m), &u);
            let rhs = pairing(&space, &m, &stepper::dual_step(&space, dt, theta, alpha.row(n), &u));
            worst = worst.max((lhs - rhs).abs() / dt);
        }
    }
    worst
}

/// Forward step with first-order upwind advection and fully implicit
/// diffusion. Positive and conservative, but not the transpose of the HJB
/// step.
pub fn upwind_step(space: &SpaceGrid, dt: f64, _theta: f64, alpha: &[f64], m: &[f64]) -> Vec<f64> {
    let n = m.len();
    let dx = space.dx();
    let flux = |mu: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                let a = 0.5 * (alpha[i] + alpha[j]);
                if a >= 0.0 {
                    a * mu[i]
                } else {
                    a * mu[j]
                }
            })
            .collect()
    };
    let speed = alpha.iter().fold(0.0f64, |s, a| s.max(a.abs()));
    let s = ((dt * speed / dx).ceil() as usize).max(1);
    let h = dt / s as f64;
    let mut mu = m.to_vec();
    for _ in 0..s {
        let f = flux(&mu);
        mu = (0..n).map(|i| mu[i] - h / dx * (f[i] - f[(i + n - 1) % n])).collect();
    }
    crate::grid::solve_implicit_heat(space, dt, &mu)
}
