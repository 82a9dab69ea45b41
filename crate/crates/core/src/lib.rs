//! Marked Gibbs point processes in the plane with an `S¹` spin symmetry.
//!
//! The crate covers the constructive side of the continuum Mermin–Wagner
//! argument: ψ-dominated pair potentials, finite-volume Gibbs sampling, the
//! graphical bond expansion with its Bernoulli domination, percolation
//! clusters and the logarithmically tapered spin deformation.

pub mod bonds;
pub mod config_space;
pub mod deformation;
pub mod error;
pub mod potential;
pub mod quadrature;
pub mod sampler;
pub mod smoothing;
pub mod spatial;

pub use error::{Error, Result};
