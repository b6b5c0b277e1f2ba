//! Kernel support matrix machine.
//!
//! Binary and one-vs-one classifiers for matrix-valued samples. Samples are
//! compared through matrix kernels `K(X, Y) in R^{n x n}`; the dual problem
//! is maximized pairwise with Newton line searches ([`smo`]), and the
//! resulting weight matrix `V = S` turns matrix inner products into scalar
//! decision values ([`model`]).
//!
//! Supporting modules cover dataset formats and the Wishart simulation
//! ([`data`]), evaluation metrics ([`metrics`]), numerical checks of the
//! Rademacher-complexity generalization bounds ([`bounds`]), model files
//! ([`persist`]) and parameter search ([`experiment`]).

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod multiclass;
pub mod persist;
pub mod smo;

pub use error::{Error, Result};
pub use kernel::{eval_kernel, CacheMode, GramCache, KernelSpec};
pub use matrix::{frobenius_inner, h_norm, matrix_inner, HNormContext, Matrix};
pub use model::TrainedBinaryModel;
pub use multiclass::{Classifier, OvoModel};
pub use smo::{SolveStatus, SolverConfig};
