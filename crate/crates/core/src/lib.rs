//! Robust block-diagonal latent representation (rBDLR).
//!
//! Joint recovery of multi-subspace structure from a column-sample data
//! matrix: a self-expressive coefficient matrix `Z`, a salient-feature
//! projection `P` and a column-sparse error `E` are learned together by an
//! inexact augmented-Lagrangian loop, while an adaptive weight matrix `W`
//! is driven towards a k-block-diagonal structure through a Fantope-based
//! regularizer on its graph Laplacian.
//!
//! The crate also ships the companion tooling used to exercise the solver:
//! a random-rotation union-of-subspaces benchmark generator ([`synth`]),
//! Gaussian corruption, and evaluation harnesses ([`eval`]) for 1-NN
//! classification and cosine K-means clustering with optimal-matching
//! accuracy and pairwise F-measure.
//!
//! All solver state lives in dense `f64` matrices ([`nalgebra::DMatrix`]);
//! the intended scale is a few thousand samples at most. With a fixed seed
//! every entry point in this crate is deterministic.

pub mod blockdiag;
mod error;
pub mod eval;
pub mod model;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    Dataset, FitReport, FitResult, Hyperparams, Mode, SolverState,
};

/// Dense double-precision matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense double-precision column vector.
pub type Vec64 = nalgebra::DVector<f64>;
