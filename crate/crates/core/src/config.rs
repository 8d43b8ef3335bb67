//! TOML experiment configuration (schema `wfpc-config/1`).
//!
//! Every section except `[grid]` has defaults; `[constraint]` is required
//! by the commands that need `Ψ`. The
//! functions on the torus `[0, Lx)` are written in terms of the angle
//! `θ_k(x) = 2πkx/Lx`:
//!
//! * `[initial]`: `uniform`, `cosine` (density `∝ 1 + a·cos θ_k(x − x₀)`)
//!   or `von_mises` (density `∝ exp(κ·cos θ_1(x − x₀))`);
//! * `[constraint]`: `Ψ(m) = a·∫cos θ_k dm − c`;
//! * `[running_cost]`: `none` or `cosine_reward`,
//!   `f(t, m) = −w·s(t)·∫cos θ_k dm` with `s ≡ 1` (`constant`) or
//!   `s(t) = sin²(πt/T)` (`sin2`);
//! * `[terminal_cost]`: `none`, `cosine` (`g = w·∫cos θ_k dm`) or
//!   `quadratic` (`g = ½w(∫cos θ_k dm)²`).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{ConstraintSpec, CylindricalFunctional, InnerFunction};
use crate::grid::{GridMeasure, SpaceGrid, TimeGrid};
use crate::hamiltonian::{validate_assumptions, HamiltonianSpec, SampleBox};
use crate::penalized::{LoopOptions, PenalizedProblem};

pub const SCHEMA_ID: &str = "wfpc-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub constraint: Option<ConstraintConfig>,
    #[serde(default)]
    pub running_cost: RunningCostConfig,
    #[serde(default)]
    pub terminal_cost: TerminalCostConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub particles: ParticleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub length: f64,
    pub n_x: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Uniform,
    Cosine,
    VonMises,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one_usize")]
    pub mode: usize,
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub concentration: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { kind: InitialKind::Uniform, amplitude: 0.0, mode: 1, center: 0.0, concentration: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub b1: f64,
    #[serde(default)]
    pub v1: f64,
    #[serde(default)]
    pub soft: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    CosineMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub kind: ConstraintKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one_usize")]
    pub mode: usize,
    pub level: f64,
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunningKind {
    None,
    CosineReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Constant,
    Sin2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunningCostConfig {
    pub kind: RunningKind,
    #[serde(default)]
    pub weight: f64,
    #[serde(default = "one_usize")]
    pub mode: usize,
    #[serde(default = "constant_profile")]
    pub profile: Profile,
}

impl Default for RunningCostConfig {
    fn default() -> Self {
        Self { kind: RunningKind::None, weight: 0.0, mode: 1, profile: Profile::Constant }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    None,
    Cosine,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalCostConfig {
    pub kind: TerminalKind,
    #[serde(default)]
    pub weight: f64,
    #[serde(default = "one_usize")]
    pub mode: usize,
}

impl Default for TerminalCostConfig {
    fn default() -> Self {
        Self { kind: TerminalKind::None, weight: 0.0, mode: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Width of the smoothed positive part.
    pub h: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, delta: 0.05, h: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_fp: f64,
    pub tol_lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = LoopOptions::default();
        Self { max_iter: d.max_iter, tol_fp: d.tol_fp, tol_lambda: d.tol_lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilon: Vec<f64>,
    /// Defaults to `epsilon`.
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
    /// Feasibility tolerance on `max_t Ψ(m(t))`.
    pub ctol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { epsilon: vec![0.2, 0.1, 0.05, 0.02, 0.01], delta: None, ctol: 1e-2 }
    }
}

impl SweepConfig {
    pub fn deltas(&self) -> Vec<f64> {
        self.delta.clone().unwrap_or_else(|| self.epsilon.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    pub seed: u64,
    /// Strength of the steering drift; defaults to twice the threshold.
    #[serde(default)]
    pub steer_c: Option<f64>,
    /// Number of independent seeds for the steering check.
    #[serde(default = "ten")]
    pub steer_seeds: usize,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self { n: 10_000, seed: 1, steer_c: None, steer_seeds: 10 }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn ten() -> usize {
    10
}

fn constant_profile() -> Profile {
    Profile::Constant
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        if cfg.schema != SCHEMA_ID {
            return Err(Error::invalid(format!("config schema is {:?}, expected {SCHEMA_ID:?}", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn space(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.grid.length, self.grid.n_x)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.n_t)
    }

    fn angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.grid.length
    }

    pub fn initial_measure(&self) -> Result<GridMeasure> {
        let space = self.space()?;
        let c = self.initial;
        match c.kind {
            InitialKind::Uniform => Ok(GridMeasure::uniform(space)),
            InitialKind::Cosine => {
                if c.amplitude.abs() > 1.0 {
                    return Err(Error::invalid("cosine initial density needs |amplitude| ≤ 1"));
                }
                let w = self.angle(c.mode);
                GridMeasure::from_weights(space, space.sample(|x| 1.0 + c.amplitude * (w * (x - c.center)).cos()))
            }
            InitialKind::VonMises => {
                let w = self.angle(1);
                GridMeasure::from_weights(space, space.sample(|x| (c.concentration * (w * (x - c.center)).cos()).exp()))
            }
        }
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec> {
        let h = self.hamiltonian;
        HamiltonianSpec::catalog(h.b0, h.b1, h.v1, h.soft, self.grid.length)
    }

    fn constraint_section(&self) -> Result<ConstraintConfig> {
        self.constraint.ok_or_else(|| Error::invalid("config has no [constraint] section"))
    }

    pub fn psi(&self) -> Result<CylindricalFunctional> {
        let space = self.space()?;
        let c = self.constraint_section()?;
        let w = self.angle(c.mode);
        let f = space.sample(|x| c.amplitude * (w * x).cos());
        CylindricalFunctional::moment(space, f, -c.level)
    }

    pub fn constraint(&self) -> Result<ConstraintSpec> {
        let c = self.constraint_section()?;
        ConstraintSpec::new(self.psi()?, c.eta1, c.eta2, &self.initial_measure()?)
    }

    pub fn running_cost(&self) -> Result<CylindricalFunctional> {
        let space = self.space()?;
        let c = self.running_cost;
        match c.kind {
            RunningKind::None => Ok(CylindricalFunctional::constant(space, 0.0)),
            RunningKind::CosineReward => {
                let w = self.angle(c.mode);
                let base = space.sample(|x| -c.weight * (w * x).cos());
                let horizon = self.grid.horizon;
                let inner = match c.profile {
                    Profile::Constant => InnerFunction::Static(base),
                    Profile::Sin2 => InnerFunction::Timed(Arc::new(move |t: f64| {
                        let s = (PI * t / horizon).sin().powi(2);
                        base.iter().map(|v| s * v).collect()
                    })),
                };
                CylindricalFunctional::new(space, vec![inner], |s| s[0], |_| vec![1.0], "cosine reward")
            }
        }
    }

    pub fn terminal_cost(&self) -> Result<CylindricalFunctional> {
        let space = self.space()?;
        let c = self.terminal_cost;
        let w = self.angle(c.mode);
        let cosine = space.sample(|x| (w * x).cos());
        let weight = c.weight;
        match c.kind {
            TerminalKind::None => Ok(CylindricalFunctional::constant(space, 0.0)),
            TerminalKind::Cosine => CylindricalFunctional::affine(space, vec![cosine], vec![weight], 0.0),
            TerminalKind::Quadratic => {
                CylindricalFunctional::composed(space, cosine, move |s| 0.5 * weight * s * s, move |s| weight * s, "quadratic moment")
            }
        }
    }

    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            max_iter: self.solver.max_iter,
            tol_fp: self.solver.tol_fp,
            tol_lambda: self.solver.tol_lambda,
            smoothing: self.penalty.h,
        }
    }

    /// Builds the penalized problem after running the assumption
    /// validators on the Hamiltonian and the constraint.
    pub fn problem(&self) -> Result<PenalizedProblem> {
        let hamiltonian = self.hamiltonian()?;
        let report = validate_assumptions(&hamiltonian, &SampleBox::default_for(self.grid.length));
        if !report.pass {
            return Err(Error::invalid(format!("Hamiltonian fails its structural assumptions: {report:?}")));
        }
        let p = self.penalty;
        if !(p.epsilon > 0.0 && p.delta > 0.0 && p.h > 0.0) {
            return Err(Error::invalid("penalty epsilon, delta and h must be positive"));
        }
        Ok(PenalizedProblem {
            hamiltonian,
            time: self.time()?,
            m0: self.initial_measure()?,
            constraint: self.constraint()?,
            running: self.running_cost()?,
            terminal: self.terminal_cost()?,
            options: self.loop_options(),
        })
    }
}
