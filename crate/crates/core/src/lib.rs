//! Numerical laboratory for the generalized surface quasi-geostrophic
//! equation `(∂t + u·∇ + κΛ^α)θ = 0` with multi-scale diagnostics of the
//! localized temperature-variance flux.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`]: periodic grid, FFTs, `Λ^α`, the SQG velocity law.
//! * [`solver`]: exponential-integrator time stepping and trajectories.
//! * [`extension`]: the weighted harmonic extension into `z > 0`.
//! * [`multiscale`]: covers, refined cutoffs and ensemble averages.
//! * [`diagnostics`]: local flux budgets, macro averages, cascade and
//!   locality reports.
//! * [`io`]: snapshot files and trajectory directories.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod extension;
pub mod fields;
pub mod io;
pub mod multiscale;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use fields::{Grid, ScalarField, SpectralField, VectorField};
