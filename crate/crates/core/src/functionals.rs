//! Cylindrical functionals `m ↦ F(∫f₁dm, …, ∫f_k dm)` and their derivatives
//! in the measure argument, plus the scalar helpers built on them: the
//! smoothed positive part `γ_h`, `Ψ⁺`, the moment distance `q` and the
//! transversality probe.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{d_dx, integrate, laplacian, GridMeasure, SpaceGrid};

/// Number of Fourier test functions used by [`q_distance`].
pub const Q_MODES: usize = 16;

type TimedSamples = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// One inner function `f_j`, sampled at the nodes.
#[derive(Clone)]
pub enum InnerFunction {
    Static(Vec<f64>),
    /// Returns the node samples of `f_j(t, ·)`.
    Timed(TimedSamples),
}

impl InnerFunction {
    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            InnerFunction::Static(v) => v.clone(),
            InnerFunction::Timed(f) => f(t),
        }
    }
}

/// Cylindrical functional with closed-form outer map and gradient.
#[derive(Clone)]
pub struct CylindricalFunctional {
    space: SpaceGrid,
    inner: Vec<InnerFunction>,
    value: ValueFn,
    gradient: GradientFn,
    label: String,
}

impl fmt::Debug for CylindricalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylindricalFunctional")
            .field("label", &self.label)
            .field("k", &self.inner.len())
            .finish()
    }
}

impl CylindricalFunctional {
    pub fn new(
        space: SpaceGrid,
        inner: Vec<InnerFunction>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        for f in &inner {
            if let InnerFunction::Static(v) = f {
                if v.len() != space.n_x() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("inner function must have one finite sample per node"));
                }
            }
        }
        Ok(Self {
            space,
            inner,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            label: label.into(),
        })
    }

    /// `m ↦ c` (no inner functions).
    pub fn constant(space: SpaceGrid, c: f64) -> Self {
        Self::new(space, vec![], move |_| c, |_| vec![], format!("constant {c}")).expect("valid")
    }

    /// `m ↦ ∫f dm + shift`.
    pub fn moment(space: SpaceGrid, f: Vec<f64>, shift: f64) -> Result<Self> {
        Self::new(
            space,
            vec![InnerFunction::Static(f)],
            move |s| s[0] + shift,
            |_| vec![1.0],
            "moment",
        )
    }

    /// `m ↦ G(∫f dm)` for a scalar `G` with derivative `dg`.
    pub fn composed(
        space: SpaceGrid,
        f: Vec<f64>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::new(space, vec![InnerFunction::Static(f)], move |s| g(s[0]), move |s| vec![dg(s[0])], label)
    }

    /// `m ↦ Σ c_j ∫f_j dm + shift`.
    pub fn affine(space: SpaceGrid, inner: Vec<Vec<f64>>, coeffs: Vec<f64>, shift: f64) -> Result<Self> {
        if inner.len() != coeffs.len() {
            return Err(Error::invalid("one coefficient per inner function"));
        }
        let c2 = coeffs.clone();
        Self::new(
            space,
            inner.into_iter().map(InnerFunction::Static).collect(),
            move |s| shift + s.iter().zip(&coeffs).map(|(a, b)| a * b).sum::<f64>(),
            move |_| c2.clone(),
            "affine",
        )
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn arity(&self) -> usize {
        self.inner.len()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.inner.iter().any(|f| matches!(f, InnerFunction::Timed(_)))
    }

    /// Node samples of every inner function at time `t`.
    pub fn inner_at(&self, t: f64) -> Vec<Vec<f64>> {
        self.inner.iter().map(|f| f.at(t)).collect()
    }

    /// `(∫f₁dm, …, ∫f_k dm)` at time `t`.
    pub fn moments(&self, m: &GridMeasure, t: f64) -> Vec<f64> {
        self.inner.iter().map(|f| integrate(m, &f.at(t))).collect()
    }

    pub fn eval(&self, m: &GridMeasure, t: f64) -> f64 {
        (self.value)(&self.moments(m, t))
    }

    /// Outer map evaluated at given moments.
    pub fn outer(&self, moments: &[f64]) -> f64 {
        (self.value)(moments)
    }

    /// `Σ ∂_jF·f_j` before the additive normalization.
    pub fn raw_derivative(&self, m: &GridMeasure, t: f64) -> Vec<f64> {
        let samples = self.inner_at(t);
        let moments: Vec<f64> = samples.iter().map(|f| integrate(m, f)).collect();
        let grad = (self.gradient)(&moments);
        let mut out = vec![0.0; self.space.n_x()];
        for (g, f) in grad.iter().zip(&samples) {
            for (o, v) in out.iter_mut().zip(f) {
                *o += g * v;
            }
        }
        out
    }

    /// `δF/δm(m, ·)`, normalized so that it integrates to zero against `m`.
    pub fn linear_derivative(&self, m: &GridMeasure, t: f64) -> Vec<f64> {
        let raw = self.raw_derivative(m, t);
        normalize_against(m, raw)
    }

    /// `D_mF(m, ·) = D_x δF/δm(m, ·)`.
    pub fn intrinsic_derivative(&self, m: &GridMeasure, t: f64) -> Vec<f64> {
        d_dx(&self.space, &self.raw_derivative(m, t))
    }

    /// `div_x D_mF(m, ·)`, using the compact three-point Laplacian so that it
    /// matches the diffusion stencil of the Fokker–Planck stepper.
    pub fn divergence_of_intrinsic(&self, m: &GridMeasure, t: f64) -> Vec<f64> {
        laplacian(&self.space, &self.raw_derivative(m, t))
    }
}

/// Subtracts the `m`-average of `phi` so that `∫phi dm = 0`.
pub fn normalize_against(m: &GridMeasure, mut phi: Vec<f64>) -> Vec<f64> {
    let c = integrate(m, &phi) / m.mass();
    for v in &mut phi {
        *v -= c;
    }
    phi
}

/// Constraint functional with its transversality constants.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub psi: CylindricalFunctional,
    pub eta1: f64,
    pub eta2: f64,
}

impl ConstraintSpec {
    /// Checks the constants and that `m0` is strictly feasible.
    pub fn new(psi: CylindricalFunctional, eta1: f64, eta2: f64, m0: &GridMeasure) -> Result<Self> {
        if !(eta1 > 0.0 && eta2 > 0.0) {
            return Err(Error::invalid("transversality constants must be positive"));
        }
        let v = psi.eval(m0, 0.0);
        if v >= 0.0 {
            return Err(Error::invalid(format!("initial measure is not strictly feasible: Ψ(m0) = {v}")));
        }
        Ok(Self { psi, eta1, eta2 })
    }
}

/// Largest violation of midpoint convexity over the given pairs.
pub fn convexity_defect(f: &CylindricalFunctional, pairs: &[(GridMeasure, GridMeasure)], t: f64) -> f64 {
    pairs
        .iter()
        .map(|(a, b)| f.eval(&a.mix(b, 0.5), t) - 0.5 * (f.eval(a, t) + f.eval(b, t)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// C² smoothing of `r ↦ max(0, r)` on `[−h, h]`.
///
/// With `s = r/h` the interpolant is `h·(3 + 8s + 6s² − s⁴)/16`. It is the
/// unique polynomial of degree ≤ 5 matching value, slope and curvature of
/// `max(0, r)` at both ends; its degree-5 coefficient happens to vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothPlus {
    h: f64,
}

impl SmoothPlus {
    pub fn new(h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("smoothing width must be positive, got {h}")));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= -self.h {
            0.0
        } else if r >= self.h {
            r
        } else {
            let s = r / self.h;
            self.h * (3.0 + s * (8.0 + s * (6.0 - s * s))) / 16.0
        }
    }

    /// `γ_h′(r) = (1 + s)²(2 − s)/4` inside the band.
    pub fn prime(&self, r: f64) -> f64 {
        if r <= -self.h {
            0.0
        } else if r >= self.h {
            1.0
        } else {
            let s = r / self.h;
            (1.0 + s).powi(2) * (2.0 - s) / 4.0
        }
    }

    pub fn second(&self, r: f64) -> f64 {
        if r.abs() >= self.h {
            0.0
        } else {
            let s = r / self.h;
            0.75 * (1.0 - s * s) / self.h
        }
    }
}

pub fn smooth_plus(s: &SmoothPlus, r: f64) -> f64 {
    s.value(r)
}

pub fn smooth_plus_prime(s: &SmoothPlus, r: f64) -> f64 {
    s.prime(r)
}

/// `Ψ⁺ = max(Ψ, 0)`.
pub fn psi_plus(v: f64) -> f64 {
    v.max(0.0)
}

/// Fourier test function `φ_i` of the moment distance: cosines at even `i`,
/// sines at odd `i`, frequency `⌊i/2⌋ + 1`. Returns samples, `‖φ_i‖_∞` and
/// `‖Dφ_i‖_∞`.
pub fn q_test_function(space: &SpaceGrid, i: usize) -> (Vec<f64>, f64, f64) {
    let k = space.wave_number(i / 2 + 1);
    let samples = if i % 2 == 0 {
        space.sample(|x| (k * x).cos())
    } else {
        space.sample(|x| (k * x).sin())
    };
    (samples, 1.0, k)
}

/// Truncated moment distance
/// `Σ_{i<K} |∫φ_i d(m₁−m₂)|² / (2^i (1 + ‖φ_i‖²_∞ + ‖Dφ_i‖²_∞))`.
pub fn q_distance(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    q_distance_k(m1, m2, Q_MODES)
}

pub fn q_distance_k(m1: &GridMeasure, m2: &GridMeasure, k_modes: usize) -> f64 {
    QBasis::new(m1.space(), k_modes).distance(m1, m2)
}

/// Sampled test functions and weights of the moment distance, for repeated
/// evaluation on one grid.
#[derive(Debug, Clone)]
pub struct QBasis {
    space: SpaceGrid,
    functions: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl QBasis {
    pub fn new(space: SpaceGrid, k_modes: usize) -> Self {
        let (functions, weights) = (0..k_modes)
            .map(|i| {
                let (phi, sup, dsup) = q_test_function(&space, i);
                (phi, 1.0 / (2f64.powi(i as i32) * (1.0 + sup * sup + dsup * dsup)))
            })
            .unzip();
        Self { space, functions, weights }
    }

    pub fn distance(&self, m1: &GridMeasure, m2: &GridMeasure) -> f64 {
        assert_eq!(self.space, m1.space());
        assert_eq!(self.space, m2.space());
        let diff: Vec<f64> = m1.density().iter().zip(m2.density()).map(|(a, b)| a - b).collect();
        let dx = self.space.dx();
        self.functions
            .iter()
            .zip(&self.weights)
            .map(|(phi, w)| {
                let gap = dx * phi.iter().zip(&diff).map(|(p, d)| p * d).sum::<f64>();
                gap * gap * w
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransversalityReport {
    /// Samples with `|Ψ| ≤ η₁`.
    pub checked: usize,
    /// Smallest `∫|D_mΨ|² dm` among checked samples.
    pub min_value: Option<f64>,
    pub pass: bool,
}

/// Verifies `∫|D_mΨ|² dm > η₂` on every sample with `|Ψ(m)| ≤ η₁`.
pub fn transversality_check(c: &ConstraintSpec, samples: &[GridMeasure], t: f64) -> TransversalityReport {
    let mut min_value: Option<f64> = None;
    let mut checked = 0;
    for m in samples {
        if c.psi.eval(m, t).abs() > c.eta1 {
            continue;
        }
        checked += 1;
        let g = c.psi.intrinsic_derivative(m, t);
        let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
        let val = integrate(m, &sq);
        min_value = Some(min_value.map_or(val, |a: f64| a.min(val)));
    }
    let pass = min_value.is_none_or(|v| v > c.eta2);
    TransversalityReport { checked, min_value, pass }
}
