//! Pseudo-spectral simulator and verification toolkit for the two-dimensional
//! fractional inhomogeneous Navier-Stokes equations on a periodic box.

pub mod besov;
pub mod contraction;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod interp;
pub mod kernel;
pub mod lagrangian;
pub mod patch;
pub mod quadrature;
pub mod sample;
pub mod scaling;
pub mod snapshot;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Componentwise, ScalarField, Spectrum, VectorField2};
pub use grid::Grid2D;
pub use spectral::{FractionalParams, Symbol};
