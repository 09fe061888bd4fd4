//! Stochastic estimation of `tr(A⁻¹)` for large sparse complex matrices.
//!
//! Three estimators share one sampling core:
//!
//! * plain Hutchinson, averaging `x* A⁻¹ x` over random vectors,
//! * Hutchinson with exact deflation of the smallest eigenpairs,
//! * a multilevel Monte-Carlo estimator that telescopes `tr(A⁻¹)` over a
//!   multigrid hierarchy and samples every level difference independently.
//!
//! All arithmetic is charged to a [`CostLedger`] at `nnz(B)` units per
//! sparse matrix-vector product, which is the quantity the experiment driver
//! compares between methods.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod generators;
pub mod multigrid;
pub mod report;
pub mod solvers;
pub mod sparse;

pub use error::{Result, TraceError};
pub use sparse::{CostCategory, CostLedger, DenseMatrix, SparseMatrix, C64};
