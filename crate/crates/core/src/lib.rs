//! Inelastic scattering of a particle off an N-level quantum system and the
//! energy-fluctuation statistics of the quantum map it induces on the system.
//!
//! The pipeline runs bottom-up: [`model`] describes the scatterer,
//! [`solver`] produces energy-normalized S-matrices, [`kraus`] turns them
//! into eigenoperator (Kraus) sets and transition tables, [`fluct`] computes
//! energy-change distributions and their thermodynamic summaries,
//! [`ensemble`] averages over the particle's kinetic energy, and [`maplab`]
//! handles arbitrary Kraus maps as an independent cross-check.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod fluct;
pub mod kraus;
pub mod maplab;
pub mod model;
pub mod parallel;
pub mod solver;

pub use error::{Error, Result};
