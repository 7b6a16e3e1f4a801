//! Numerical laboratory for resolvent trace identities.
//!
//! The crate computes both sides of an integral trace formula relating a
//! regularized index of the model operator `D = d/dt + D2 + h(t)·A` to a
//! spectral-flow style integral over a path of inner-space operators, and
//! exercises every supporting identity (resolvent-derivative combinatorics,
//! Laplace transforms, partial traces, adiabatic rescaling) as testable
//! numerical procedures on finite matrix truncations.
//!
//! Modules follow the pipeline:
//! * [`operator`] — dense hermitian linear algebra substrate,
//! * [`profile`] + [`model`] — interpolating profiles and model assembly,
//! * [`trace`] — both sides of the trace formula and the quadrature identities,
//! * [`calculus`] — the multi-index calculus for resolvent derivatives,
//! * [`quadrature`] — shared quadrature rules.

pub mod calculus;
pub mod error;
pub mod model;
pub mod operator;
pub mod profile;
pub mod quadrature;
pub mod trace;

mod eigen;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

