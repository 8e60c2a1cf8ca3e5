//! Pseudo-spectral lab for convex-integration weak solutions of the 3D Boussinesq
//! system with thermal diffusion on the torus [0, 2pi)^3.

pub mod calculus_ops;
pub mod diagnostics_io;
pub mod error;
pub mod mikado;
pub mod params;
pub mod scheme;
pub mod solvers;
pub mod torus_fields;

pub use error::{Error, Result};
