//! Hamiltonians `H(x, p)` of the catalog family
//!
//! `H(x, p) = ½p² + b(x)p + V(x) + κ(√(1 + p²) − 1)`
//!
//! with `b(x) = b₀ + b₁cos(2πx/Lx)` and `V(x) = v₁cos(2πx/Lx)`. For `κ = 0`
//! the Lagrangian has the closed form `½(q + b)² − V`; for `κ > 0` it is
//! computed by a safeguarded Newton solve of the Legendre transform.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Half-width of the momentum box used to calibrate `C₀` and `μ`.
pub const DEFAULT_P_BOX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSpec {
    pub b0: f64,
    pub b1: f64,
    pub v1: f64,
    pub soft: f64,
    pub length: f64,
    /// Growth constant shared by the two-sided quadratic bound and the
    /// `|D_xH| ≤ C₀(1 + |p|)` bound.
    pub c0: f64,
    /// Uniform convexity constant, `1/μ ≤ D_ppH ≤ μ`.
    pub mu: f64,
}

impl HamiltonianSpec {
    /// Catalog member with `C₀` and `μ` calibrated on the default sample box.
    pub fn catalog(b0: f64, b1: f64, v1: f64, soft: f64, length: f64) -> Result<Self> {
        if ![b0, b1, v1, soft, length].iter().all(|v| v.is_finite()) || soft < 0.0 || length <= 0.0 {
            return Err(Error::invalid("Hamiltonian parameters must be finite with soft ≥ 0 and length > 0"));
        }
        let mut spec = Self { b0, b1, v1, soft, length, c0: 1.0, mu: 1.0 };
        let report = validate_assumptions(&spec, &SampleBox::default_for(length));
        spec.c0 = report.min_c0.max(1e-12);
        spec.mu = report.min_mu.max(1.0);
        Ok(spec)
    }

    /// `H = ½p²`.
    pub fn quadratic(length: f64) -> Self {
        Self::catalog(0.0, 0.0, 0.0, 0.0, length).expect("valid parameters")
    }

    /// Replaces the calibrated constants by user values after checking them.
    pub fn with_constants(mut self, c0: f64, mu: f64) -> Result<Self> {
        if !(c0 > 0.0 && mu >= 1.0) {
            return Err(Error::invalid("need C0 > 0 and mu ≥ 1"));
        }
        self.c0 = c0;
        self.mu = mu;
        let report = validate_assumptions(&self, &SampleBox::default_for(self.length));
        if !report.pass {
            return Err(Error::invalid(format!(
                "constants too small: need C0 ≥ {}, mu ≥ {}",
                report.min_c0, report.min_mu
            )));
        }
        Ok(self)
    }

    pub fn is_quadratic(&self) -> bool {
        self.soft == 0.0
    }

    fn k(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn b(&self, x: f64) -> f64 {
        self.b0 + self.b1 * (self.k() * x).cos()
    }

    pub fn potential(&self, x: f64) -> f64 {
        self.v1 * (self.k() * x).cos()
    }

    pub fn h(&self, x: f64, p: f64) -> f64 {
        0.5 * p * p + self.b(x) * p + self.potential(x) + self.soft * ((1.0 + p * p).sqrt() - 1.0)
    }

    pub fn dp(&self, x: f64, p: f64) -> f64 {
        p + self.b(x) + self.soft * p / (1.0 + p * p).sqrt()
    }

    pub fn dpp(&self, _x: f64, p: f64) -> f64 {
        1.0 + self.soft / (1.0 + p * p).powf(1.5)
    }

    pub fn dx(&self, x: f64, p: f64) -> f64 {
        let s = -self.k() * (self.k() * x).sin();
        self.b1 * s * p + self.v1 * s
    }

    /// Largest `|D_pH(x, p)|` over `|p| ≤ bound`; `D_pH` is increasing in `p`.
    pub fn max_speed(&self, x: f64, bound: f64) -> f64 {
        self.dp(x, bound).abs().max(self.dp(x, -bound).abs())
    }

    /// `L(x, q) = sup_p {−p·q − H(x, p)}`.
    pub fn lagrangian(&self, x: f64, q: f64) -> Result<f64> {
        if self.is_quadratic() {
            let s = q + self.b(x);
            return Ok(0.5 * s * s - self.potential(x));
        }
        let p = legendre_maximizer(|p| self.dp(x, p), |p| self.dpp(x, p), q)?;
        Ok(-p * q - self.h(x, p))
    }

    /// Fenchel–Young gap `L(x, q) + H(x, p) + p·q ≥ 0`.
    pub fn young_gap(&self, x: f64, p: f64, q: f64) -> Result<f64> {
        Ok(self.lagrangian(x, q)? + self.h(x, p) + p * q)
    }
}

pub fn lagrangian(spec: &HamiltonianSpec, x: f64, q: f64) -> Result<f64> {
    spec.lagrangian(x, q)
}

pub fn young_gap(spec: &HamiltonianSpec, x: f64, p: f64, q: f64) -> Result<f64> {
    spec.young_gap(x, p, q)
}

/// Solves `D_pH(p) = −q` for a strictly convex `H`, i.e. the maximizer of
/// `p ↦ −p·q − H(p)`. Newton steps are kept inside a sign-change bracket and
/// replaced by bisection whenever they leave it.
pub fn legendre_maximizer(dp: impl Fn(f64) -> f64, dpp: impl Fn(f64) -> f64, q: f64) -> Result<f64> {
    let g = |p: f64| dp(p) + q;
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut expand = 0;
    while g(lo) > 0.0 {
        lo *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::NonConvergence { iterations: expand, reason: "no lower bracket".into() });
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::NonConvergence { iterations: expand, reason: "no upper bracket".into() });
        }
    }
    let tol = 1e-14 * (1.0 + q.abs());
    let mut p = 0.5 * (lo + hi);
    for it in 0..200 {
        let gp = g(p);
        if gp.abs() <= tol {
            return Ok(p);
        }
        if gp < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let newton = p - gp / dpp(p);
        p = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + p.abs()) {
            return Ok(p);
        }
        if it == 199 {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        reason: format!("Legendre solve stalled at p = {p}, residual {}", g(p)),
    })
}

/// Sample box of `(x, p)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
}

impl SampleBox {
    pub fn new(xs: Vec<f64>, p_max: f64, n_p: usize) -> Self {
        let ps = (0..n_p).map(|j| -p_max + 2.0 * p_max * j as f64 / (n_p - 1) as f64).collect();
        Self { xs, ps }
    }

    pub fn default_for(length: f64) -> Self {
        let xs = (0..64).map(|i| length * i as f64 / 64.0).collect();
        Self::new(xs, DEFAULT_P_BOX, 401)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Smallest `C₀` meeting `p²/C₀ − C₀ ≤ H ≤ C₀p² + C₀` on the box.
    pub growth_c0: f64,
    /// Smallest `C₀` meeting `|D_xH| ≤ C₀(1 + |p|)` on the box.
    pub gradient_c0: f64,
    /// `max(growth_c0, gradient_c0)`.
    pub min_c0: f64,
    /// Smallest `μ ≥ 1` with `1/μ ≤ D_ppH ≤ μ` on the box.
    pub min_mu: f64,
    /// Whether the spec's own `C₀`, `μ` dominate the minimal ones.
    pub pass: bool,
}

/// Scans the box for the growth, gradient and convexity bounds.
pub fn validate_assumptions(spec: &HamiltonianSpec, sample: &SampleBox) -> AssumptionReport {
    let mut growth: f64 = 0.0;
    let mut gradient: f64 = 0.0;
    let mut mu: f64 = 1.0;
    for &x in &sample.xs {
        for &p in &sample.ps {
            let h = spec.h(x, p);
            let upper = h / (1.0 + p * p);
            let lower = 0.5 * (-h + (h * h + 4.0 * p * p).sqrt());
            growth = growth.max(upper).max(lower);
            gradient = gradient.max(spec.dx(x, p).abs() / (1.0 + p.abs()));
            let d = spec.dpp(x, p);
            mu = mu.max(d).max(1.0 / d);
        }
    }
    let min_c0 = growth.max(gradient);
    let pass = spec.c0 >= min_c0 * (1.0 - 1e-12) && spec.mu >= mu * (1.0 - 1e-12);
    AssumptionReport { growth_c0: growth, gradient_c0: gradient, min_c0, min_mu: mu, pass }
}
