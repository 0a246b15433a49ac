//! Library side of the `scatfluct` command: configuration, sweeps, figure
//! data, S-matrix dumps and the invariant suite. The binary in `main.rs`
//! only parses arguments and maps outcomes to exit codes.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod smatrix;
pub mod sweep;
pub mod thermal;
pub mod verify;
