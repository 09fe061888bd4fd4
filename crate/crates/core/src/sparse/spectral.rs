use super::DenseMatrix;
use crate::{Result, TraceError};

/// Largest dimension accepted by [`spectral_summary`].
pub const SPECTRAL_SIZE_LIMIT: usize = 2048;

/// Singular values (non-increasing) and the squared diagonal moduli of a
/// square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub singular_values: Vec<f64>,
    pub diag_moduli_sq: f64,
}

impl SpectralSummary {
    /// `Σσ_i² − Σ|a_ii|²`, which equals the squared Frobenius norm of the
    /// offdiagonal part.
    pub fn offdiag_frobenius_sq(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum::<f64>() - self.diag_moduli_sq
    }
}

pub fn spectral_summary(a: &DenseMatrix) -> Result<SpectralSummary> {
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            op: "spectral_summary",
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    if a.nrows() > SPECTRAL_SIZE_LIMIT {
        return Err(TraceError::TooLarge {
            n: a.nrows(),
            limit: SPECTRAL_SIZE_LIMIT,
            hint: "",
        });
    }
    let mut singular_values: Vec<f64> = a.to_nalgebra().singular_values().iter().copied().collect();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    let diag_moduli_sq = (0..a.nrows()).map(|i| a.get(i, i).norm_sqr()).sum();
    Ok(SpectralSummary {
        singular_values,
        diag_moduli_sq,
    })
}
