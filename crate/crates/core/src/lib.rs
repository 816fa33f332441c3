//! Rating-migration estimation and consistency diagnostics.
//!
//! The crate turns per-entity rating event files into piecewise-
//! constant daily paths and estimates transition matrices over rolling
//! windows by three routes: the cohort method (row-normalized endpoint
//! migration counts), the generator method (empirical intensity matrix,
//! exponentiated), and the Chapman-Kolmogorov product of sub-window
//! cohort estimates. Likelihood-loss diagnostics compare the routes as
//! a function of time and of the number of rating states, with pairwise
//! state coarsening (15 -> 8 -> 4 -> 2) built in. A seeded simulator
//! provides synthetic samples with known ground truth.
//!
//! Numeric code is generic over the scalar type through
//! [`scalar::Scalar`] (f32 or f64); the `*64` aliases below fix f64,
//! which is what the CLI uses throughout.

pub mod diagnostics;
pub mod estimators;
pub mod expm;
pub mod ingest;
pub mod matrix;
pub mod scalar;
pub mod simulate;
pub mod statespace;

pub use expm::matrix_exponential;
pub use ingest::{parse_history_file, GradeScale, IngestConfig, RatingHistory};
pub use matrix::{GeneratorMatrix, StochasticMatrix};
pub use scalar::Scalar;
pub use statespace::{CoarseningMap, MergeLeftover, StateSpace};

pub type StochasticMatrix64 = matrix::StochasticMatrix<f64>;
pub type GeneratorMatrix64 = matrix::GeneratorMatrix<f64>;
pub type StateSpace64 = statespace::StateSpace<f64>;
pub type TransitionCounts64 = estimators::TransitionCounts<f64>;
pub type DiagnosticsBundle64 = diagnostics::DiagnosticsBundle<f64>;
