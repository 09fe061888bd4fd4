//! Complex sparse and dense primitives with work accounting.
//!
//! Every operation that the cost model counts takes a [`CostLedger`] and
//! charges it; vector-vector and scalar work is free.

mod csr;
mod dense;
mod ledger;
pub mod mtx;
mod spectral;
pub mod vector;

pub use csr::SparseMatrix;
pub use dense::{dense_invert, trace_product, DenseMatrix};
pub use ledger::{CostCategory, CostLedger};
pub use spectral::{spectral_summary, SpectralSummary, SPECTRAL_SIZE_LIMIT};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
