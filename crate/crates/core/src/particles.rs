//! Particle oracle: Euler–Maruyama for `dX = α(t, X)dt + √2 dB` on the
//! torus, the McKean–Vlasov steering flow and Itô's formula along
//! empirical measures.
//!
//! Every particle owns the ChaCha8 stream `(seed, i)`, so results do not
//! depend on how the particle loop is scheduled. Empirical measures are
//! deposited on the grid with cloud-in-cell weights, which makes
//! `∫f dm̂` equal to the particle average of the piecewise-linear
//! interpolant of `f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{ConstraintSpec, CylindricalFunctional};
use crate::grid::{integrate, interpolate, locate, ControlField, GridMeasure, MeasurePath, SpaceGrid, TimeGrid};

pub const MIN_PARTICLES: usize = 100;

/// Constants of the envelope `W₁ ≤ c₁·Lx/√N + c₂·dx` between particle
/// histograms and grid Fokker–Planck paths, fitted on the catalog drifts
/// with a von Mises start (κ = 3, Lx = 1, T = 0.1, dt = 1.25e-4) over
/// n_x ∈ {32, 64, 128}, N ∈ {10³, 10⁴, 10⁵} and four seeds, then rounded up.
pub const W1_ENVELOPE_C1: f64 = 0.6;
pub const W1_ENVELOPE_C2: f64 = 0.02;

pub fn w1_envelope(space: &SpaceGrid, n: usize) -> f64 {
    W1_ENVELOPE_C1 * space.length() / (n as f64).sqrt() + W1_ENVELOPE_C2 * space.dx()
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    space: SpaceGrid,
    seed: u64,
    positions: Vec<f64>,
    streams: Vec<ChaCha8Rng>,
}

impl ParticleEnsemble {
    /// Draws `n` positions from `m0` by inversion of its cumulative
    /// distribution, reading the density as constant on the cell
    /// `[x_i − dx/2, x_i + dx/2)` around each node.
    pub fn sample(m0: &GridMeasure, n: usize, seed: u64) -> Result<Self> {
        if n < MIN_PARTICLES {
            return Err(Error::invalid(format!("need at least {MIN_PARTICLES} particles, got {n}")));
        }
        let space = m0.space();
        let dx = space.dx();
        let mut cdf = Vec::with_capacity(space.n_x());
        let mut acc = 0.0;
        for d in m0.density() {
            acc += d * dx;
            cdf.push(acc);
        }
        let total = acc;
        let mut streams: Vec<ChaCha8Rng> = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64);
                r
            })
            .collect();
        let positions = streams
            .par_iter_mut()
            .map(|r| {
                let q = r.random::<f64>() * total;
                let i = cdf.partition_point(|c| *c <= q).min(space.n_x() - 1);
                let below = if i == 0 { 0.0 } else { cdf[i - 1] };
                let width = cdf[i] - below;
                let frac = if width > 0.0 { ((q - below) / width).clamp(0.0, 1.0) } else { 0.5 };
                space.wrap(space.x(i) + (frac - 0.5) * dx)
            })
            .collect();
        Ok(Self { space, seed, positions, streams })
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// One Euler–Maruyama step `X ← X + b(X)dt + √(2dt)ξ`, wrapped onto
    /// the torus.
    pub fn step(&mut self, dt: f64, drift: impl Fn(f64) -> f64 + Sync) {
        let space = self.space;
        let sigma = (2.0 * dt).sqrt();
        self.positions.par_iter_mut().zip(self.streams.par_iter_mut()).for_each(|(x, r)| {
            let xi: f64 = r.sample(StandardNormal);
            *x = space.wrap(*x + drift(*x) * dt + sigma * xi);
        });
    }

    /// Cloud-in-cell histogram on the grid.
    pub fn histogram(&self) -> GridMeasure {
        let n_x = self.space.n_x();
        let w = 1.0 / (self.positions.len() as f64 * self.space.dx());
        let mut d = vec![0.0; n_x];
        for &x in &self.positions {
            let (i, f) = locate(&self.space, x);
            d[i] += (1.0 - f) * w;
            d[(i + 1) % n_x] += f * w;
        }
        GridMeasure::new(self.space, d).expect("cloud-in-cell deposit has unit mass")
    }
}

/// Simulates `dX = α dt + √2 dB` from `X₀ ~ m₀` and returns the histogram
/// at every time node. Step `n` uses row `n` of `α`, interpolated linearly
/// in `x`.
pub fn simulate_sde(alpha: &ControlField, m0: &GridMeasure, n: usize, seed: u64) -> Result<MeasurePath> {
    let time = alpha.time();
    let space = alpha.space();
    if m0.space() != space {
        return Err(Error::invalid("initial measure and control live on different grids"));
    }
    if !alpha.values().is_finite() {
        return Err(Error::invalid("drift must be finite"));
    }
    let mut ens = ParticleEnsemble::sample(m0, n, seed)?;
    let mut slices = Vec::with_capacity(time.len());
    slices.push(ens.histogram());
    for k in 0..time.n_t() {
        let row = alpha.row(k);
        ens.step(time.dt(), |x| interpolate(&space, row, x));
        slices.push(ens.histogram());
    }
    MeasurePath::new(time, slices)
}

/// `‖div_x D_mΨ(m, ·)‖∞ / η₂`: the smallest steering strength for which the
/// flow is guaranteed to push `Ψ` down on `{|Ψ| < η₁}`.
pub fn steering_threshold(constraint: &ConstraintSpec, m: &GridMeasure, t: f64) -> f64 {
    let div = constraint.psi.divergence_of_intrinsic(m, t);
    div.iter().fold(0.0f64, |s, v| s.max(v.abs())) / constraint.eta2
}

#[derive(Debug, Clone, Serialize)]
pub struct SteeringReport {
    pub c: f64,
    /// Largest threshold seen along the empirical path.
    pub threshold: f64,
    /// `max(Ψ(m₀), −η₁)`.
    pub bound: f64,
    pub psi: Vec<f64>,
    /// Standard error of `Ψ(m̂(t))` from the delta method.
    pub noise: Vec<f64>,
    pub warning: Option<String>,
    #[serde(skip)]
    pub path: MeasurePath,
}

impl SteeringReport {
    /// Largest `Ψ(m̂(t)) − bound − k·noise(t)` over the time nodes.
    pub fn excess(&self, k: f64) -> f64 {
        self.psi
            .iter()
            .zip(&self.noise)
            .map(|(p, s)| p - self.bound - k * s)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// McKean–Vlasov flow `dX = −C·D_mΨ(m̂(t), X)dt + √2 dB` with `D_mΨ`
/// recomputed from the empirical measure at every step.
///
/// Runs below the threshold as well, but then sets a warning.
pub fn steering_flow(
    c: f64,
    constraint: &ConstraintSpec,
    m0: &GridMeasure,
    time: TimeGrid,
    n: usize,
    seed: u64,
) -> Result<SteeringReport> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::invalid("steering strength must be finite and nonnegative"));
    }
    let psi = &constraint.psi;
    let space = m0.space();
    let mut ens = ParticleEnsemble::sample(m0, n, seed)?;
    let mut threshold: f64 = 0.0;
    let mut slices = Vec::with_capacity(time.len());
    let mut values = Vec::with_capacity(time.len());
    let mut noise = Vec::with_capacity(time.len());
    for k in 0..=time.n_t() {
        let t = time.t(k);
        let m = ens.histogram();
        threshold = threshold.max(steering_threshold(constraint, &m, t));
        values.push(psi.eval(&m, t));
        noise.push(delta_method_error(psi, &m, ens.positions(), t));
        if k < time.n_t() {
            let dm = psi.intrinsic_derivative(&m, t);
            ens.step(time.dt(), |x| -c * interpolate(&space, &dm, x));
        }
        slices.push(m);
    }
    let warning = (c <= threshold).then(|| {
        format!("steering strength {c} does not exceed the threshold {threshold:.4}; the decrease of Ψ is not guaranteed")
    });
    Ok(SteeringReport {
        c,
        threshold,
        bound: psi.eval(m0, 0.0).max(-constraint.eta1),
        psi: values,
        noise,
        warning,
        path: MeasurePath::new(time, slices)?,
    })
}

/// `sd(δF/δm(m, X))/√N` over the particles.
fn delta_method_error(f: &CylindricalFunctional, m: &GridMeasure, positions: &[f64], t: f64) -> f64 {
    let space = m.space();
    let phi = f.raw_derivative(m, t);
    let n = positions.len() as f64;
    let vals: Vec<f64> = positions.iter().map(|x| interpolate(&space, &phi, *x)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Largest defect over the time nodes of
/// `U(m(t)) = U(m(0)) + ∫₀ᵗ∫[D_mU·α + div_x D_mU] dm ds`
/// along `path`, with the time integral by the trapezoid rule. `U` is
/// evaluated with its inner functions frozen at `t = 0`.
pub fn ito_check(u: &CylindricalFunctional, path: &MeasurePath, alpha: &ControlField) -> f64 {
    let time = path.time();
    let integrand: Vec<f64> = (0..time.len())
        .map(|j| {
            let m = path.at(j);
            let dm = u.intrinsic_derivative(m, 0.0);
            let div = u.divergence_of_intrinsic(m, 0.0);
            let g: Vec<f64> = alpha.row(j).iter().zip(&dm).zip(&div).map(|((a, d), v)| a * d + v).collect();
            integrate(m, &g)
        })
        .collect();
    let start = u.eval(path.at(0), 0.0);
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for j in 1..time.len() {
        acc += 0.5 * time.dt() * (integrand[j - 1] + integrand[j]);
        worst = worst.max((u.eval(path.at(j), 0.0) - start - acc).abs());
    }
    worst
}

/// Wasserstein-1 distance between two grid measures on the circle, with
/// each node's mass placed at the node: `dx·Σ|G_i − median(G)|` where `G`
/// is the running difference of the node masses.
pub fn circular_w1(a: &GridMeasure, b: &GridMeasure) -> f64 {
    let space = a.space();
    assert_eq!(space, b.space(), "measures live on different grids");
    let dx = space.dx();
    let mut g = Vec::with_capacity(space.n_x());
    let mut acc = 0.0;
    for (p, q) in a.density().iter().zip(b.density()) {
        acc += (p - q) * dx;
        g.push(acc);
    }
    let mut sorted = g.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    dx * g.iter().map(|v| (v - median).abs()).sum::<f64>()
}

/// [`circular_w1`] at every time node.
pub fn path_w1(a: &MeasurePath, b: &MeasurePath) -> Vec<f64> {
    a.slices().iter().zip(b.slices()).map(|(p, q)| circular_w1(p, q)).collect()
}
