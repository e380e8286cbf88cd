//! Atomistic lattice models, the Cauchy–Born continuum limit, atomistic
//! stress and lattice stability, with convergence experiments.

pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod interpolation;
pub mod lattice;
pub mod potentials;
pub mod quadrature;
mod solvers;
pub mod stability;
pub mod statics;
pub mod stress;

pub use error::{Error, Result};
pub use lattice::{grad_norm, Direction, DisplacementField, LatticeSpec, NormIndex, StencilSet};
pub use potentials::{Potential, PotentialKind, PotentialSpec, Polynomial, RadialFunction};
