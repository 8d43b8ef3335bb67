//! Periodic space-time grids, discrete densities and the finite-difference
//! calculus shared by every solver.
//!
//! All arrays are node-centered on the torus `[0, Lx)`. A measure is stored
//! as a density with respect to `dx`, so `integrate` is a plain Riemann sum.

use crate::error::{Error, Result};

/// Slack allowed on `dx·Σ density = 1`.
pub const MASS_TOL: f64 = 1e-12;

/// Most negative density entry tolerated as round-off.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_t: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_t: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_t < 2 {
            return Err(Error::invalid(format!("n_t must be at least 2, got {n_t}")));
        }
        Ok(Self { horizon, n_t })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    /// Number of nodes, `n_t + 1`.
    pub fn len(&self) -> usize {
        self.n_t + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.t(j)).collect()
    }

    /// Trapezoid rule for a series sampled at the nodes.
    pub fn trapezoid(&self, series: &[f64]) -> f64 {
        assert_eq!(series.len(), self.len(), "series length must be n_t + 1");
        let inner: f64 = series[1..self.n_t].iter().sum();
        self.dt() * (0.5 * (series[0] + series[self.n_t]) + inner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    length: f64,
    n_x: usize,
}

impl SpaceGrid {
    pub fn new(length: f64, n_x: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("period length must be positive, got {length}")));
        }
        if n_x < 8 {
            return Err(Error::invalid(format!("n_x must be at least 8, got {n_x}")));
        }
        Ok(Self { length, n_x })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_x).map(|i| f(self.x(i))).collect()
    }

    /// Maps a position onto `[0, Lx)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly `length`
        if y >= self.length {
            0.0
        } else {
            y
        }
    }

    /// Wave number `2πk/Lx` of the k-th Fourier mode.
    pub fn wave_number(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.length
    }
}

/// Probability density on a [`SpaceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    space: SpaceGrid,
    density: Vec<f64>,
}

impl GridMeasure {
    /// Validates nonnegativity and unit mass.
    pub fn new(space: SpaceGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != space.n_x() {
            return Err(Error::invalid(format!(
                "density has {} entries, grid has {}",
                density.len(),
                space.n_x()
            )));
        }
        if let Some((i, v)) = density
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -NEGATIVITY_TOL)
        {
            return Err(Error::invalid(format!("density[{i}] = {v} is negative or not finite")));
        }
        let mass = space.dx() * density.iter().sum::<f64>();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("mass {mass} differs from 1 by more than {MASS_TOL}")));
        }
        Ok(Self { space, density })
    }

    /// Normalizes nonnegative weights into a density.
    pub fn from_weights(space: SpaceGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total = space.dx() * weights.iter().sum::<f64>();
        if total <= 0.0 {
            return Err(Error::invalid("weights have zero total mass"));
        }
        Self::new(space, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(space: SpaceGrid) -> Self {
        let d = 1.0 / space.length();
        Self { space, density: vec![d; space.n_x()] }
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn into_density(self) -> Vec<f64> {
        self.density
    }

    pub fn mass(&self) -> f64 {
        self.space.dx() * self.density.iter().sum::<f64>()
    }

    /// Convex combination `(1-w)·self + w·other`.
    pub fn mix(&self, other: &GridMeasure, w: f64) -> GridMeasure {
        assert_eq!(self.space, other.space, "measures live on different grids");
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        GridMeasure { space: self.space, density }
    }
}

/// `dx·Σ φ_i·density_i`.
///
/// # Panics
/// If `phi` does not have one sample per node.
pub fn integrate(m: &GridMeasure, phi: &[f64]) -> f64 {
    assert_eq!(phi.len(), m.density.len(), "integrand length does not match the grid");
    m.space.dx() * phi.iter().zip(&m.density).map(|(p, d)| p * d).sum::<f64>()
}

/// Discrete `L²(dx)` pairing of two node arrays.
pub fn pairing(space: &SpaceGrid, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    space.dx() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Central difference `(f_{i+1} − f_{i−1}) / 2dx` with wraparound.
///
/// The stencil cannot see the Nyquist mode `(−1)^i`: it maps it to zero.
pub fn d_dx(space: &SpaceGrid, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert_eq!(n, space.n_x());
    let c = 0.5 / space.dx();
    (0..n).map(|i| c * (f[(i + 1) % n] - f[(i + n - 1) % n])).collect()
}

/// Three-point periodic Laplacian `(f_{i+1} − 2f_i + f_{i−1}) / dx²`.
pub fn laplacian(space: &SpaceGrid, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert_eq!(n, space.n_x());
    let c = 1.0 / (space.dx() * space.dx());
    (0..n)
        .map(|i| c * (f[(i + 1) % n] - 2.0 * f[i] + f[(i + n - 1) % n]))
        .collect()
}

/// Periodic piecewise-linear interpolation of node values at `x`.
pub fn interpolate(space: &SpaceGrid, f: &[f64], x: f64) -> f64 {
    let (i, w) = locate(space, x);
    let n = space.n_x();
    (1.0 - w) * f[i] + w * f[(i + 1) % n]
}

/// Left node index and fractional offset of `x` within its cell.
pub fn locate(space: &SpaceGrid, x: f64) -> (usize, f64) {
    let s = space.wrap(x) / space.dx();
    let i = (s.floor() as usize).min(space.n_x() - 1);
    (i, (s - i as f64).clamp(0.0, 1.0))
}

/// Solves `(I − a·Δ) x = rhs` for the periodic three-point Laplacian.
///
/// Cyclic Thomas algorithm with a Sherman–Morrison correction for the two
/// corner entries. `a = 0` returns `rhs` unchanged.
pub fn solve_implicit_heat(space: &SpaceGrid, a: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    assert_eq!(n, space.n_x());
    if a == 0.0 {
        return rhs.to_vec();
    }
    let r = a / (space.dx() * space.dx());
    let diag = 1.0 + 2.0 * r;
    let off = -r;
    let gamma = -diag;
    let mut b = vec![diag; n];
    b[0] = diag - gamma;
    b[n - 1] = diag - off * off / gamma;
    let x = thomas(off, &b, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = thomas(off, &b, &u);
    let fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + z[0] + off * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Tridiagonal solve with constant off-diagonals.
fn thomas(off: f64, b: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    c[0] = off / b[0];
    y[0] = d[0] / b[0];
    for i in 1..n {
        let denom = b[i] - off * c[i - 1];
        c[i] = off / denom;
        y[i] = (d[i] - off * y[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

/// Time-indexed family of measures; slice `j` lives at `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePath {
    time: TimeGrid,
    slices: Vec<GridMeasure>,
}

impl MeasurePath {
    pub fn new(time: TimeGrid, slices: Vec<GridMeasure>) -> Result<Self> {
        if slices.len() != time.len() {
            return Err(Error::invalid(format!(
                "path has {} slices, time grid has {} nodes",
                slices.len(),
                time.len()
            )));
        }
        let space = slices[0].space();
        if slices.iter().any(|s| s.space() != space) {
            return Err(Error::invalid("path slices live on different grids"));
        }
        Ok(Self { time, slices })
    }

    /// The path that stays at `m` for all times.
    pub fn constant(time: TimeGrid, m: GridMeasure) -> Self {
        Self { time, slices: vec![m; time.len()] }
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn space(&self) -> SpaceGrid {
        self.slices[0].space()
    }

    pub fn slices(&self) -> &[GridMeasure] {
        &self.slices
    }

    pub fn at(&self, j: usize) -> &GridMeasure {
        &self.slices[j]
    }

    pub fn initial(&self) -> &GridMeasure {
        &self.slices[0]
    }

    pub fn terminal(&self) -> &GridMeasure {
        &self.slices[self.time.n_t()]
    }

    /// Slice-wise convex combination `(1-w)·self + w·other`.
    pub fn mix(&self, other: &MeasurePath, w: f64) -> MeasurePath {
        assert_eq!(self.time, other.time);
        let slices = self.slices.iter().zip(&other.slices).map(|(a, b)| a.mix(b, w)).collect();
        MeasurePath { time: self.time, slices }
    }
}

/// Space-time scalar field stored row by row, one row per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    time: TimeGrid,
    space: SpaceGrid,
    data: Vec<f64>,
}

impl ValueField {
    pub fn zeros(time: TimeGrid, space: SpaceGrid) -> Self {
        Self { time, space, data: vec![0.0; time.len() * space.n_x()] }
    }

    pub fn from_rows(time: TimeGrid, space: SpaceGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != time.len() || rows.iter().any(|r| r.len() != space.n_x()) {
            return Err(Error::invalid("field rows do not match the grids"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field has non-finite entries"));
        }
        Ok(Self { time, space, data })
    }

    /// Samples `f(t, x)` at every node.
    pub fn from_fn(time: TimeGrid, space: SpaceGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(time, space);
        for j in 0..time.len() {
            let t = time.t(j);
            for (i, v) in field.row_mut(j).iter_mut().enumerate() {
                *v = f(t, space.x(i));
            }
        }
        field
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.space.n_x();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.space.n_x();
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Drift field `α(t_j, x_i)` together with the share `θ_j` of the unit
/// diffusion that the stepper treats explicitly on step `j → j+1`.
///
/// The explicit share is what keeps central advection monotone: step `j` is
/// positivity preserving when `θ_j ≥ dx·max|α_j|/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    values: ValueField,
    split: Vec<f64>,
}

impl ControlField {
    /// Wraps a drift with the smallest admissible explicit share per step.
    pub fn new(values: ValueField) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::invalid("control has non-finite entries"));
        }
        let dx = values.space.dx();
        let split = (0..values.time.n_t())
            .map(|j| 0.5 * dx * values.row(j).iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .collect();
        Ok(Self { values, split })
    }

    /// Wraps a drift with explicit shares chosen by the caller.
    pub fn with_split(values: ValueField, split: Vec<f64>) -> Result<Self> {
        if split.len() != values.time.n_t() {
            return Err(Error::invalid("one explicit diffusion share per time step is required"));
        }
        if !values.is_finite() || split.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("control entries or diffusion shares out of range"));
        }
        Ok(Self { values, split })
    }

    /// Spatially constant drift `c` on every node.
    pub fn constant(time: TimeGrid, space: SpaceGrid, c: f64) -> Self {
        Self::new(ValueField::from_fn(time, space, |_, _| c)).expect("finite constant")
    }

    pub fn values(&self) -> &ValueField {
        &self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j)
    }

    pub fn split(&self) -> &[f64] {
        &self.split
    }

    pub fn time(&self) -> TimeGrid {
        self.values.time
    }

    pub fn space(&self) -> SpaceGrid {
        self.values.space
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn space(n: usize) -> SpaceGrid {
        SpaceGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn integrate_trivial_cases() {
        let s = space(32);
        let m = GridMeasure::uniform(s);
        assert!((integrate(&m, &vec![1.0; 32]) - 1.0).abs() < 1e-14);
        assert!((integrate(&m, m.density()) - 1.0).abs() < 1e-14);
        let sine = s.sample(|x| (2.0 * PI * x).sin());
        assert!(integrate(&m, &sine).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn integrate_rejects_length_mismatch() {
        let m = GridMeasure::uniform(space(16));
        integrate(&m, &[1.0; 8]);
    }

    #[test]
    fn measure_validation() {
        let s = space(8);
        assert!(GridMeasure::new(s, vec![1.0; 8]).is_ok());
        assert!(GridMeasure::new(s, vec![2.0; 8]).is_err());
        let mut d = vec![1.0; 8];
        d[0] = -0.5;
        d[1] = 1.5;
        assert!(GridMeasure::new(s, d).is_err());
        assert!(SpaceGrid::new(1.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn derivatives_kill_constants() {
        let s = space(16);
        let c = vec![3.7; 16];
        assert!(d_dx(&s, &c).iter().all(|v| *v == 0.0));
        assert!(laplacian(&s, &c).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nyquist_mode_is_invisible_to_central_difference() {
        let s = space(16);
        let f: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(d_dx(&s, &f).iter().all(|v| *v == 0.0));
        // the Laplacian sees it with the largest eigenvalue −4/dx²
        let lap = laplacian(&s, &f);
        let dx2 = s.dx() * s.dx();
        for (l, v) in lap.iter().zip(&f) {
            assert!((l + 4.0 * v / dx2).abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_stencil_on_spike() {
        let s = space(16);
        let mut f = vec![0.0; 16];
        f[5] = 1.0;
        let lap = laplacian(&s, &f);
        let dx2 = s.dx() * s.dx();
        assert!((lap[4] - 1.0 / dx2).abs() < 1e-9);
        assert!((lap[5] + 2.0 / dx2).abs() < 1e-9);
        assert!((lap[6] - 1.0 / dx2).abs() < 1e-9);
        assert_eq!(lap.iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn implicit_heat_inverts_operator() {
        let s = space(24);
        let rhs = s.sample(|x| (2.0 * PI * x).cos() + 0.3 * (6.0 * PI * x).sin() + 1.0);
        let a = 0.01;
        let x = solve_implicit_heat(&s, a, &rhs);
        let lap = laplacian(&s, &x);
        for i in 0..24 {
            assert!((x[i] - a * lap[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_wraps() {
        let s = space(8);
        let f = s.sample(|x| x * x);
        assert!((interpolate(&s, &f, s.x(3)) - f[3]).abs() < 1e-15);
        let mid = interpolate(&s, &f, 0.5 * (s.x(7) + 1.0));
        assert!((mid - 0.5 * f[7]).abs() < 1e-15);
        assert!((interpolate(&s, &f, s.x(2) + 3.0) - f[2]).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_is_exact_on_linear_series() {
        let tg = TimeGrid::new(2.0, 10).unwrap();
        let series: Vec<f64> = tg.nodes().iter().map(|t| 3.0 * t + 1.0).collect();
        assert!((tg.trapezoid(&series) - 8.0).abs() < 1e-12);
    }
}
