//! Numerical solver for optimal control of the Fokker–Planck equation on a
//! periodic 1D domain under a convex constraint `Ψ(m(t)) ≤ 0` on the law.
//!
//! The constraint is handled by penalization with strengths `(ε, δ)`; the
//! penalized optimality system couples a backward HJB equation and a forward
//! Fokker–Planck equation through the multiplier `ν(t) = λ(t)/ε`.

pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fokker_planck;
pub mod functionals;
pub mod grid;
pub mod hamiltonian;
pub mod hjb;
pub mod particles;
pub mod penalized;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{ControlField, GridMeasure, MeasurePath, SpaceGrid, TimeGrid, ValueField};
