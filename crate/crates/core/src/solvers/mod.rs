//! Gauss–Seidel smoothing, multigrid V-cycles and flexible GMRES.

mod fgmres;
mod multigrid;

pub use fgmres::fgmres;
pub use multigrid::MultigridSolver;

use serde::{Deserialize, Serialize};

use crate::sparse::{dense_invert, CostCategory, CostLedger, DenseMatrix, SparseMatrix, C64};
use crate::{Result, TraceError};

/// Largest operator that is inverted densely.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Repeated V-cycles on the residual equation.
    Stationary,
    /// Flexible GMRES preconditioned by one V-cycle per step.
    FlexibleKrylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub nu_pre: usize,
    pub nu_post: usize,
    pub rtol: f64,
    pub max_iter: usize,
    pub mode: SolverMode,
    pub krylov_restart: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            nu_pre: 1,
            nu_post: 1,
            rtol: 1e-8,
            max_iter: 200,
            mode: SolverMode::Stationary,
            krylov_restart: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relres: f64,
}

/// Applies `A_ℓ⁻¹` on any level of a hierarchy.
pub trait LevelSolver: Sync {
    fn solve(&self, level: usize, b: &[C64], ledger: &mut CostLedger) -> Result<Vec<C64>>;
}

/// One Gauss–Seidel sweep for `A x = b`, in place, forward or backward.
/// `diag` must be the diagonal of `A`. Charges `nnz(A)`.
pub fn gauss_seidel_sweep(
    a: &SparseMatrix,
    diag: &[C64],
    b: &[C64],
    x: &mut [C64],
    forward: bool,
    ledger: &mut CostLedger,
) -> Result<()> {
    let n = a.nrows();
    if b.len() != n || x.len() != n || diag.len() != n {
        return Err(TraceError::DimensionMismatch {
            op: "gauss-seidel",
            expected: n,
            got: b.len().min(x.len()).min(diag.len()),
        });
    }
    let mut step = |i: usize| {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    };
    if forward {
        (0..n).for_each(&mut step);
    } else {
        (0..n).rev().for_each(&mut step);
    }
    ledger.charge(CostCategory::Smoothing, a.nnz() as u64);
    Ok(())
}

pub(crate) fn checked_diagonal(a: &SparseMatrix) -> Result<Vec<C64>> {
    let diag = a.diagonal();
    match diag.iter().position(|d| d.norm() == 0.0) {
        Some(row) => Err(TraceError::ZeroDiagonal { row }),
        None => Ok(diag),
    }
}

/// Dense inverse of a sparse operator, refusing anything above [`DENSE_LIMIT`].
pub fn dense_inverse_of(a: &SparseMatrix, ledger: &mut CostLedger) -> Result<DenseMatrix> {
    if a.nrows() > DENSE_LIMIT {
        return Err(TraceError::TooLarge {
            n: a.nrows(),
            limit: DENSE_LIMIT,
            hint: "; use a deeper hierarchy so the coarsest level is smaller",
        });
    }
    dense_invert(&a.to_dense(), ledger)
}

/// Exact solves from stored dense inverses of every level, each charged `n_ℓ²`.
#[derive(Debug, Clone)]
pub struct DenseLevelSolver {
    inverses: Vec<DenseMatrix>,
}

impl DenseLevelSolver {
    pub fn new(operators: &[&SparseMatrix], ledger: &mut CostLedger) -> Result<Self> {
        let inverses = operators
            .iter()
            .map(|a| dense_inverse_of(a, ledger))
            .collect::<Result<_>>()?;
        Ok(Self { inverses })
    }

    pub fn inverse(&self, level: usize) -> &DenseMatrix {
        &self.inverses[level]
    }
}

impl LevelSolver for DenseLevelSolver {
    fn solve(&self, level: usize, b: &[C64], ledger: &mut CostLedger) -> Result<Vec<C64>> {
        let inv = self.inverses.get(level).ok_or_else(|| {
            TraceError::InvalidArgument(format!("no inverse stored for level {level}"))
        })?;
        inv.matvec(b, ledger, CostCategory::CoarseSolve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_laplace2d;
    use crate::sparse::vector::{norm2, sub};

    #[test]
    fn gauss_seidel_reduces_laplace_error() {
        let a = gen_laplace2d(8).unwrap();
        let diag = checked_diagonal(&a).unwrap();
        let b = vec![C64::new(1.0, 0.0); 64];
        let mut x = vec![C64::new(0.0, 0.0); 64];
        let mut ledger = CostLedger::new();
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            gauss_seidel_sweep(&a, &diag, &b, &mut x, true, &mut ledger).unwrap();
            let r = sub(&b, &a.spmv(&x, &mut CostLedger::new()).unwrap());
            assert!(norm2(&r) < last);
            last = norm2(&r);
        }
        assert_eq!(ledger.category(CostCategory::Smoothing), 5 * a.nnz() as u64);
    }

    #[test]
    fn gauss_seidel_exact_on_diagonal() {
        let a = SparseMatrix::from_diagonal(&[C64::new(2.0, 0.0), C64::new(0.0, 4.0)]);
        let mut x = vec![C64::new(0.0, 0.0); 2];
        let b = [C64::new(2.0, 0.0), C64::new(4.0, 0.0)];
        gauss_seidel_sweep(&a, &a.diagonal(), &b, &mut x, false, &mut CostLedger::new()).unwrap();
        assert_eq!(x, vec![C64::new(1.0, 0.0), C64::new(0.0, -1.0)]);
    }

    #[test]
    fn hand_checked_forward_sweep() {
        let a = SparseMatrix::from_dense(&DenseMatrix::from_real_rows(&[&[4.0, -1.0], &[-1.0, 4.0]]));
        let b = [C64::new(3.0, 0.0); 2];
        let mut x = vec![C64::new(0.0, 0.0); 2];
        gauss_seidel_sweep(&a, &a.diagonal(), &b, &mut x, true, &mut CostLedger::new()).unwrap();
        assert_eq!(x, vec![C64::new(0.75, 0.0), C64::new(0.9375, 0.0)]);
    }

    #[test]
    fn residual_non_increasing_over_sweeps() {
        let a = gen_laplace2d(12).unwrap();
        let b: Vec<C64> = (0..144).map(|i| C64::new(((i * 37) % 11) as f64 - 5.0, 0.0)).collect();
        let mut x = vec![C64::new(0.0, 0.0); 144];
        let mut last = norm2(&b);
        for _ in 0..10 {
            gauss_seidel_sweep(&a, &a.diagonal(), &b, &mut x, true, &mut CostLedger::new()).unwrap();
            let r = norm2(&sub(&b, &a.spmv(&x, &mut CostLedger::new()).unwrap()));
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn zero_diagonal_detected() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 1, C64::new(1.0, 0.0)), (1, 0, C64::new(1.0, 0.0))]).unwrap();
        assert!(matches!(checked_diagonal(&a), Err(TraceError::ZeroDiagonal { row: 0 })));
    }

    #[test]
    fn dense_level_solver_inverts() {
        let a = gen_laplace2d(4).unwrap();
        let s = DenseLevelSolver::new(&[&a], &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..16).map(|i| C64::new(i as f64, 1.0)).collect();
        let mut ledger = CostLedger::new();
        let x = s.solve(0, &b, &mut ledger).unwrap();
        let back = a.spmv(&x, &mut CostLedger::new()).unwrap();
        assert!(crate::sparse::vector::max_abs_diff(&back, &b) < 1e-12);
        assert_eq!(ledger.category(CostCategory::CoarseSolve), 256);
    }
}
