//! The splitting shared by the HJB and Fokker–Planck marches.
//!
//! One time step with drift `α` and explicit diffusion share `θ` is
//!
//! * HJB (backward, acting on `u`): `K u` then `s` explicit substeps of
//!   `z ↦ z + (dt/s)(θΔz + α·D_c z)`;
//! * Fokker–Planck (forward, acting on `m`): `s` explicit substeps of
//!   `μ ↦ μ + (dt/s)(θΔμ − D_c(αμ))` then `K μ`;
//!
//! where `K = (I − (1−θ)dt·Δ)⁻¹` and `D_c` is the central difference. Since
//! `D_c` is skew and `Δ`, `K` are symmetric for the `dx`-weighted pairing,
//! the Fokker–Planck step is the exact transpose of the linear HJB step.
//! Central advection is monotone when `θ ≥ dx·|α|/2`, and the explicit part
//! is stable when `2·θ·dt/s ≤ dx²`; the number of substeps `s` is the
//! smallest integer achieving the latter.

use crate::grid::{d_dx, laplacian, solve_implicit_heat, SpaceGrid};

/// Smallest number of explicit substeps with `2θ(dt/s) ≤ dx²`.
pub fn substeps(space: &SpaceGrid, dt: f64, theta: f64) -> usize {
    let ratio = 2.0 * theta * dt / (space.dx() * space.dx());
    // tolerate round-off right at the limit
    (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// `z + h(θΔz + α·D_c z)`.
pub fn dual_explicit(space: &SpaceGrid, h: f64, theta: f64, alpha: &[f64], z: &[f64]) -> Vec<f64> {
    let lap = laplacian(space, z);
    let grad = d_dx(space, z);
    (0..z.len()).map(|i| z[i] + h * (theta * lap[i] + alpha[i] * grad[i])).collect()
}

/// `μ + h(θΔμ − D_c(αμ))`.
pub fn primal_explicit(space: &SpaceGrid, h: f64, theta: f64, alpha: &[f64], mu: &[f64]) -> Vec<f64> {
    let lap = laplacian(space, mu);
    let flux: Vec<f64> = alpha.iter().zip(mu).map(|(a, m)| a * m).collect();
    let div = d_dx(space, &flux);
    (0..mu.len()).map(|i| mu[i] + h * (theta * lap[i] - div[i])).collect()
}

/// Implicit part `K` of a step.
pub fn implicit(space: &SpaceGrid, dt: f64, theta: f64, f: &[f64]) -> Vec<f64> {
    solve_implicit_heat(space, (1.0 - theta) * dt, f)
}

/// Linear HJB step `u ↦ E_s(K u)` for a frozen drift, without sources.
pub fn dual_step(space: &SpaceGrid, dt: f64, theta: f64, alpha: &[f64], u: &[f64]) -> Vec<f64> {
    let s = substeps(space, dt, theta);
    let h = dt / s as f64;
    let mut z = implicit(space, dt, theta, u);
    for _ in 0..s {
        z = dual_explicit(space, h, theta, alpha, &z);
    }
    z
}

/// Fokker–Planck step `m ↦ K(E_sᵀ m)` for a frozen drift.
pub fn primal_step(space: &SpaceGrid, dt: f64, theta: f64, alpha: &[f64], m: &[f64]) -> Vec<f64> {
    let s = substeps(space, dt, theta);
    let h = dt / s as f64;
    let mut mu = m.to_vec();
    for _ in 0..s {
        mu = primal_explicit(space, h, theta, alpha, &mu);
    }
    implicit(space, dt, theta, &mu)
}
