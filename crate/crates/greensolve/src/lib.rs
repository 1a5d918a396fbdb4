//! Green-operator laboratory for the dual Schrödinger problem `u = G(mu - V u)`
//! on the unit ball, with classical and restricted fractional kernels.

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod operator;
pub mod quadrature;
pub mod schrodinger;

pub use error::{Error, Result};
pub use grid::{GridSpec, QuadGrid};
pub use kernel::{GreenKernel, Variant};
pub use measure::{Atom, Potential, RadonMeasure, Singularity, ZReport};
pub use operator::GreenMatrix;
