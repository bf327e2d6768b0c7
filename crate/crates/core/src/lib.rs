//! Random-walk Metropolis and preconditioned Crank–Nicolson kernels, together
//! with explicit conductance, spectral-gap and mixing-time bounds and the Monte
//! Carlo estimators that check them.
//!
//! Modules follow the data flow of an experiment:
//! [`targets`] builds log-concave targets, [`isoperimetry`] supplies minorants of
//! their isoperimetric profiles, [`bounds`] turns minorants and close couplings
//! into certified bounds, [`samplers`] runs the kernels and [`estimators`]
//! measures the quantities the bounds control.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod isoperimetry;
pub mod quadrature;
pub mod rng;
pub mod samplers;
pub mod special;
pub mod targets;

pub use error::{Error, Result};
