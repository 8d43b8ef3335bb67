//! Backward HJB equation `−∂_t u + H(x, Du) − Δu = ψ`, `u(T) = g̃`, with a
//! source that may jump in time.
//!
//! The march works on the shifted unknown `v = u − ∫_t^T ψ ds`, which stays
//! continuous in time when `ψ` jumps, and reconstructs `u` at the end. The
//! time integral is the left-endpoint sum `C^n = Σ_{j ≥ n} ψ^j dt`, so step
//! `n` (from `t_{n+1}` to `t_n`) sees the source value `ψ^n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{d_dx, laplacian, ControlField, SpaceGrid, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::spectral::Spectral;
use crate::stepper;

#[derive(Debug, Clone)]
pub struct HjbProblem {
    pub spec: HamiltonianSpec,
    /// Right-hand side `ψ(t_j, x_i)`.
    pub source: ValueField,
    /// Terminal datum `g̃`.
    pub terminal: Vec<f64>,
}

impl HjbProblem {
    pub fn new(spec: HamiltonianSpec, source: ValueField, terminal: Vec<f64>) -> Result<Self> {
        if terminal.len() != source.space().n_x() {
            return Err(Error::invalid("terminal datum does not match the grid"));
        }
        if !source.is_finite() || terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("HJB data must be finite"));
        }
        Ok(Self { spec, source, terminal })
    }

    pub fn space(&self) -> SpaceGrid {
        self.source.space()
    }
}

#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub u: ValueField,
    /// `v = u − ∫_t^T ψ ds`.
    pub v: ValueField,
    /// Feedback `α = −D_pH(x, Du)`; row `n < n_t` is the drift used on step
    /// `n`, the last row comes from `D g̃`.
    pub control: ControlField,
    /// Explicit substeps used on each step (1 unless the CFL guard fired).
    pub substeps: Vec<usize>,
    /// `hjb_residual` of the solution.
    pub residual: f64,
    /// Gradient bound from the problem data alone (no multiplier split).
    pub certificate: BernsteinCertificate,
}

impl HjbSolution {
    /// `max_{t,x} |D_c u|`.
    pub fn max_gradient(&self) -> f64 {
        let space = self.u.space();
        (0..self.u.time().len())
            .map(|j| sup_norm(&d_dx(&space, self.u.row(j))))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Semi-implicit backward march.
///
/// Each step applies implicit diffusion, evaluates `H` at the central
/// gradient of the result, and then adds the explicit share `θ` of the
/// diffusion together with the Hamiltonian. `θ` is the smallest value that
/// keeps the step monotone for every gradient the step can produce, and the
/// explicit part is sub-stepped whenever `dt·max|D_pH| > dx`. With `s`
/// substeps the Hamiltonian is linearized at the step's initial gradient,
/// which reduces to the nonlinear step when `s = 1`.
pub fn solve_backward(p: &HjbProblem) -> Result<HjbSolution> {
    let time = p.source.time();
    let space = p.space();
    let n_t = time.n_t();
    let n_x = space.n_x();
    let dt = time.dt();
    let dx = space.dx();
    let xs = space.nodes();

    let mut cumulative = vec![vec![0.0; n_x]; n_t + 1];
    for n in (0..n_t).rev() {
        let src = p.source.row(n);
        cumulative[n] = cumulative[n + 1].iter().zip(src).map(|(c, s)| c + dt * s).collect();
    }

    let mut v = ValueField::zeros(time, space);
    let mut u = ValueField::zeros(time, space);
    let mut alpha = ValueField::zeros(time, space);
    v.row_mut(n_t).copy_from_slice(&p.terminal);
    u.row_mut(n_t).copy_from_slice(&p.terminal);
    let terminal_grad = d_dx(&space, &p.terminal);
    for (i, a) in alpha.row_mut(n_t).iter_mut().enumerate() {
        *a = -p.spec.dp(xs[i], terminal_grad[i]);
    }
    let mut split = vec![0.0; n_t];
    let mut substeps = vec![1; n_t];

    for n in (0..n_t).rev() {
        // u^{n+1} = v^{n+1} + ∫_{t_{n+1}}^T ψ
        let y: Vec<f64> = v.row(n + 1).iter().zip(&cumulative[n + 1]).map(|(a, b)| a + b).collect();
        let bound = sup_norm(&d_dx(&space, &y));
        let theta = 0.5 * dx * xs.iter().map(|x| p.spec.max_speed(*x, bound)).fold(0.0, f64::max);
        if theta > 1.0 {
            return Err(Error::numerical(
                n,
                format!("cell Péclet number dx·max|D_pH|/2 = {theta:.3} exceeds 1; refine the grid"),
            ));
        }
        let w = stepper::implicit(&space, dt, theta, &y);
        let grad = d_dx(&space, &w);
        let mut a_row = vec![0.0; n_x];
        let mut running = vec![0.0; n_x];
        for i in 0..n_x {
            a_row[i] = -p.spec.dp(xs[i], grad[i]);
            running[i] = -a_row[i] * grad[i] - p.spec.h(xs[i], grad[i]);
        }
        let s = stepper::substeps(&space, dt, theta);
        let mut z = w;
        for _ in 0..s {
            z = stepper::dual_explicit(&space, dt / s as f64, theta, &a_row, &z);
        }
        let v_row = v.row_mut(n);
        for i in 0..n_x {
            v_row[i] = z[i] + dt * running[i] - cumulative[n + 1][i];
        }
        if v_row.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(n, "non-finite value in HJB march"));
        }
        let v_row = v.row(n).to_vec();
        for (o, (a, b)) in u.row_mut(n).iter_mut().zip(v_row.iter().zip(&cumulative[n])) {
            *o = a + b;
        }
        alpha.row_mut(n).copy_from_slice(&a_row);
        split[n] = theta;
        substeps[n] = s;
    }

    let control = ControlField::with_split(alpha, split)?;
    Ok(finish(p, u, v, control, substeps))
}

fn finish(p: &HjbProblem, u: ValueField, v: ValueField, control: ControlField, substeps: Vec<usize>) -> HjbSolution {
    let placeholder = BernsteinCertificate { bound: f64::INFINITY, observed: 0.0, holds: true };
    let mut sol = HjbSolution { u, v, control, substeps, residual: 0.0, certificate: placeholder };
    sol.residual = hjb_residual(&sol, p);
    sol.certificate = bernstein_bound(&sol, &BernsteinInputs::from_problem(p));
    sol
}

/// Max-norm residual of `−∂_t u + H(x, Du) − Δu − ψ` at half steps.
///
/// Half steps where `ψ` jumps by more than `√dt·(1 + ‖ψ‖_∞)` are skipped.
pub fn hjb_residual(sol: &HjbSolution, p: &HjbProblem) -> f64 {
    let time = sol.u.time();
    let space = sol.u.space();
    let dt = time.dt();
    let xs = space.nodes();
    let jump_tol = dt.sqrt() * (1.0 + p.source.max_abs());
    let mut worst: f64 = 0.0;
    for n in 0..time.n_t() {
        let (a, b) = (p.source.row(n), p.source.row(n + 1));
        if a.iter().zip(b).any(|(x, y)| (x - y).abs() > jump_tol) {
            continue;
        }
        let mid: Vec<f64> = sol.u.row(n).iter().zip(sol.u.row(n + 1)).map(|(x, y)| 0.5 * (x + y)).collect();
        let grad = d_dx(&space, &mid);
        let lap = laplacian(&space, &mid);
        for i in 0..space.n_x() {
            let dudt = (sol.u.row(n + 1)[i] - sol.u.row(n)[i]) / dt;
            let psi = 0.5 * (a[i] + b[i]);
            let r = -dudt + p.spec.h(xs[i], grad[i]) - lap[i] - psi;
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Data of the closed-form gradient bound
///
/// `‖Du‖_∞ ≤ 2e^{C₀T}[C₀T + ‖Dφ‖_∞∫ν dt + ‖Dψ‖_∞] + 2√2[η‖Dφ(T)‖_∞ + ‖Dg‖_∞]`
///
/// for sources `ν(t)φ + ψ` and terminal datum `ηφ(T) + g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinInputs {
    pub c0: f64,
    pub horizon: f64,
    pub d_phi_sup: f64,
    /// `∫_0^T λ/ε dt`.
    pub nu_l1: f64,
    pub d_psi_sup: f64,
    /// `β/δ`.
    pub eta: f64,
    pub d_phi_terminal: f64,
    pub d_g_sup: f64,
}

impl BernsteinInputs {
    /// Reads the whole source as `ψ` and the terminal datum as `g`.
    pub fn from_problem(p: &HjbProblem) -> Self {
        let space = p.space();
        let time = p.source.time();
        let d_psi_sup = (0..time.len()).map(|j| sup_norm(&d_dx(&space, p.source.row(j)))).fold(0.0, f64::max);
        Self {
            c0: p.spec.c0,
            horizon: time.horizon(),
            d_phi_sup: 0.0,
            nu_l1: 0.0,
            d_psi_sup,
            eta: 0.0,
            d_phi_terminal: 0.0,
            d_g_sup: sup_norm(&d_dx(&space, &p.terminal)),
        }
    }

    pub fn bound(&self) -> f64 {
        let t = self.horizon;
        2.0 * (self.c0 * t).exp() * (self.c0 * t + self.d_phi_sup * self.nu_l1 + self.d_psi_sup)
            + 2.0 * std::f64::consts::SQRT_2 * (self.eta * self.d_phi_terminal + self.d_g_sup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinCertificate {
    pub bound: f64,
    pub observed: f64,
    pub holds: bool,
}

/// Compares the observed `max|Du|` with the closed-form bound.
pub fn bernstein_bound(sol: &HjbSolution, inputs: &BernsteinInputs) -> BernsteinCertificate {
    let bound = inputs.bound();
    let observed = sol.max_gradient();
    BernsteinCertificate { bound, observed, holds: observed <= bound }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Truncation radius `R` of the cutoff Hamiltonian.
    pub radius: f64,
    /// Stop once the weighted iterate gap falls below `tol·(1 + |||u|||)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `e^{μt}` of the iterate-gap norm.
    pub mu: f64,
}

impl PicardOptions {
    pub fn new(radius: f64, horizon: f64) -> Self {
        Self { radius, tol: 1e-12, max_iter: 500, mu: 10.0 / horizon }
    }
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub solution: HjbSolution,
    /// Weighted gaps `|||u_{j+1} − u_j|||` per iteration.
    pub gaps: Vec<f64>,
    /// Ratios of successive gaps.
    pub factors: Vec<f64>,
    pub converged: bool,
    /// False when the gap grew on three consecutive iterations.
    pub contracting: bool,
}

/// Smooth cutoff: 1 on `|p| ≤ R + 1`, 0 on `|p| ≥ R + 2`, quintic smoothstep
/// in between.
pub fn cutoff(radius: f64, p: f64) -> f64 {
    let s = (p.abs() - radius - 1.0).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Fixed-point iteration of the Duhamel map
///
/// `Φ(u′)(s) = P_{T−s} g̃ + ∫_s^T P_{t−s}[ψ(t) − H_R(·, Du′(t))] dt`
///
/// with the heat semigroup applied spectrally. On each interval
/// `[t_n, t_{n+1}]` the integrand is frozen at its value at `t_n` and the
/// semigroup is integrated exactly.
pub fn heat_semigroup_picard(p: &HjbProblem, radius: f64) -> Result<PicardReport> {
    heat_semigroup_picard_with(p, PicardOptions::new(radius, p.source.time().horizon()))
}

/// Default truncation radius: twice the Bernstein bound of the problem.
pub fn default_radius(p: &HjbProblem) -> f64 {
    2.0 * BernsteinInputs::from_problem(p).bound()
}

pub fn heat_semigroup_picard_with(p: &HjbProblem, opts: PicardOptions) -> Result<PicardReport> {
    if !(opts.radius > 0.0) {
        return Err(Error::invalid("truncation radius must be positive"));
    }
    let time = p.source.time();
    let space = p.space();
    let n_t = time.n_t();
    let dt = time.dt();
    let xs = space.nodes();
    let sp = Spectral::new(space);

    let mut u = ValueField::zeros(time, space);
    for n in 0..=n_t {
        let row = sp.heat(&p.terminal, time.horizon() - time.t(n));
        u.row_mut(n).copy_from_slice(&row);
    }

    let mut gaps = Vec::new();
    let mut factors = Vec::new();
    let mut growth_streak = 0;
    let mut converged = false;
    let mut contracting = true;
    for _ in 0..opts.max_iter {
        let mut next = ValueField::zeros(time, space);
        next.row_mut(n_t).copy_from_slice(&p.terminal);
        for n in (0..n_t).rev() {
            let grad = sp.derivative(u.row(n));
            let forcing: Vec<f64> = (0..space.n_x())
                .map(|i| {
                    let hr = cutoff(opts.radius, grad[i]) * p.spec.h(xs[i], grad[i]);
                    p.source.row(n)[i] - hr
                })
                .collect();
            let propagated = sp.heat(next.row(n + 1), dt);
            let forced = sp.heat_integral(&forcing, dt);
            for (o, (a, f)) in next.row_mut(n).iter_mut().zip(propagated.iter().zip(&forced)) {
                *o = a + f;
            }
        }
        if !next.is_finite() {
            return Err(Error::numerical(gaps.len(), "non-finite Picard iterate"));
        }
        let gap = weighted_norm(&sp, &time_diff(&next, &u), opts.mu);
        let size = weighted_norm(&sp, &next, opts.mu);
        if let Some(last) = gaps.last() {
            let f = gap / last;
            factors.push(f);
            growth_streak = if f > 1.0 { growth_streak + 1 } else { 0 };
        }
        gaps.push(gap);
        u = next;
        if gap <= opts.tol * (1.0 + size) {
            converged = true;
            break;
        }
        if growth_streak >= 3 {
            contracting = false;
            break;
        }
    }

    let v = shifted(&u, &p.source);
    let mut alpha = ValueField::zeros(time, space);
    for n in 0..=n_t {
        let grad = sp.derivative(u.row(n));
        for (i, a) in alpha.row_mut(n).iter_mut().enumerate() {
            *a = -p.spec.dp(xs[i], grad[i]);
        }
    }
    let control = ControlField::new(alpha)?;
    let solution = finish(p, u, v, control, vec![1; n_t]);
    Ok(PicardReport { solution, gaps, factors, converged, contracting })
}

fn time_diff(a: &ValueField, b: &ValueField) -> ValueField {
    let mut out = a.clone();
    for n in 0..a.time().len() {
        for (o, v) in out.row_mut(n).iter_mut().zip(b.row(n)) {
            *o -= v;
        }
    }
    out
}

/// `Σ_n dt·e^{μ t_n}(‖f^n‖_∞ + ‖Df^n‖_∞)`.
fn weighted_norm(sp: &Spectral, f: &ValueField, mu: f64) -> f64 {
    let time = f.time();
    (0..time.len())
        .map(|n| {
            let row = f.row(n);
            time.dt() * (mu * time.t(n)).exp() * (sup_norm(row) + sup_norm(&sp.derivative(row)))
        })
        .sum()
}

fn shifted(u: &ValueField, source: &ValueField) -> ValueField {
    let time = u.time();
    let dt = time.dt();
    let mut v = u.clone();
    let mut acc = vec![0.0; u.space().n_x()];
    for n in (0..time.n_t()).rev() {
        for (a, s) in acc.iter_mut().zip(source.row(n)) {
            *a += dt * s;
        }
        for (o, a) in v.row_mut(n).iter_mut().zip(&acc) {
            *o -= a;
        }
    }
    v
}
