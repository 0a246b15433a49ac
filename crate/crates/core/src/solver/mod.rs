//! Stationary coupled-channel scattering at fixed total energy.
//!
//! The interaction is cut into constant slabs. Each slab is diagonalized once
//! (its eigenbasis does not depend on energy) and the slabs are chained with
//! the scattering-matrix star product, so evanescent channels only ever enter
//! through decaying exponentials.
//!
//! Midpoint slicing is second order in the slab width. By default the
//! solver combines two grids (`M` and `2M` slabs) by Richardson
//! extrapolation and returns the nearest unitary matrix to the result, which
//! is fourth order and exactly unitary.

mod grid;
mod layer;
mod oracle;
mod scatterer;
mod smatrix;

pub use grid::{build_grid, Slice, SliceGrid};
pub use layer::{compose_smatrix, CMatrix, LayerScattering};
pub use oracle::{oracle_two_channel_flat, square_barrier_transmission};
pub use scatterer::Scatterer;
pub use smatrix::{layer_scattering, solve_on_grid, solve_smatrix, Direction, ScatteringMatrixE, SolverSettings};
