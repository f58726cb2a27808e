//! Numerical laboratory for the stochastic moist primitive equations on the
//! spherical shell `S² × (0,1)`.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, configuration and
//! the command-line driver live in the companion `moistpe` crate.

#![no_std]

extern crate alloc;

pub mod attractor;
pub mod diagnostics;
mod linalg;
pub mod mesh;
pub mod monitor;
pub mod noise;
pub mod operators;
pub mod solver;

pub use mesh::{Boundary, FieldNorms, Grid, ScalarField, State, SurfaceField, SurfaceTangent, TangentField};
