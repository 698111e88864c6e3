//! Monte-Carlo toolkit for Dirichlet groundstates of Schrödinger operators on
//! nodal domains.
//!
//! The crate propagates Feynman-Kac-weighted Brownian (or drifted) walkers
//! inside the nodal domains of a skew-symmetric trial wave function, stops
//! them on the nodes to sample the weighted hitting distribution, and turns
//! those samples into estimates of groundstate energies, of the gradient of
//! the fixed-node energy with respect to the nodal parameters, and of a
//! symmetry diagnostic that detects whether the nodes are the zeros of an
//! exact skew-symmetric eigenfunction.
//!
//! Every stochastic estimator has a deterministic counterpart in [`oracle`]
//! (finite-difference eigensolves and closed-form interval references) which
//! the test suites use as ground truth.

pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod model;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod symmetry;
pub mod trial;

pub use error::CoreError;
pub use model::{local_energy, Model};
pub use symmetry::{apply_symmetry, SymmetryGroup, SymmetryOperation};
pub use trial::{nodal_shape_velocity, verify_skew_symmetry, Configuration, TrialWaveFunction};
