//! Simulation and estimation toolkit for dissipative adiabatic measurements.
//!
//! A dissipative system relaxing to a unique steady state `ρ_θ` is coupled
//! weakly (strength `1/T`) and for a long time (`N T`) to a pointer. The
//! pointer then reads out `N ⟨A⟩_θ` without collapsing `ρ_θ`, which yields an
//! estimator of θ whose error scales as `1/N`.
//!
//! The crate is organized bottom-up:
//!
//! - [`operator`]: dense operators, superoperators, GKLS generators, matrix
//!   exponentials and spectra.
//! - [`liouvillian`]: parameterized models, steady states and the
//!   pseudoinverse of the Liouvillian.
//! - [`dam`]: exact and perturbative simulation of the pointer distribution.
//! - [`estimation`]: estimators, error formulas, Monte Carlo validation and
//!   quantum Fisher information.

pub mod dam;
pub mod error;
pub mod estimation;
mod expm;
pub mod liouvillian;
pub mod operator;

pub use error::{Error, Result};
