use nalgebra::DMatrix;

use super::{CostCategory, CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![C64::new(0.0, 0.0); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(TraceError::DimensionMismatch {
                op: "dense construction",
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    /// Real matrix from nested rows; panics on ragged input (test helper).
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| C64::new(v, 0.0))).collect();
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn adjoint(&self) -> Self {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.set(j, i, self.get(i, j).conj());
            }
        }
        t
    }

    /// `A x`, charged `nrows * ncols` units (every entry is stored).
    pub fn matvec(&self, x: &[C64], ledger: &mut CostLedger, category: CostCategory) -> Result<Vec<C64>> {
        if x.len() != self.ncols {
            return Err(TraceError::DimensionMismatch {
                op: "dense matvec",
                expected: self.ncols,
                got: x.len(),
            });
        }
        let y = (0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        ledger.charge(category, (self.nrows * self.ncols) as u64);
        Ok(y)
    }

    /// Uncharged dense product, used by oracles and tests.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != other.nrows {
            return Err(TraceError::DimensionMismatch {
                op: "dense product",
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.get(i, k);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = &other.data[k * other.ncols..(k + 1) * other.ncols];
                let dst = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(TraceError::DimensionMismatch {
                op: "dense difference",
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        })
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Charges exactly `n³` units. Fails when a pivot falls below
/// `1e-14 * ‖A‖_max`.
pub fn dense_invert(a: &DenseMatrix, ledger: &mut CostLedger) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            op: "dense_invert",
            nrows: a.nrows,
            ncols: a.ncols,
        });
    }
    let n = a.nrows;
    let threshold = 1e-14 * a.norm_max();
    let mut work = a.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, work.get(r, col).norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 {
            return Err(TraceError::Singular {
                column: col,
                pivot: pivot_abs,
            });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let scale = work.get(col, col).inv();
        for j in 0..n {
            work.data[col * n + j] *= scale;
            inv.data[col * n + j] *= scale;
        }
        let pivot_work: Vec<C64> = work.row(col).to_vec();
        let pivot_inv: Vec<C64> = inv.row(col).to_vec();
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work.get(r, col);
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            let wr = &mut work.data[r * n..(r + 1) * n];
            for (w, p) in wr.iter_mut().zip(&pivot_work) {
                *w -= factor * p;
            }
            let ir = &mut inv.data[r * n..(r + 1) * n];
            for (w, p) in ir.iter_mut().zip(&pivot_inv) {
                *w -= factor * p;
            }
        }
    }
    ledger.charge(CostCategory::DenseInverse, (n as u64).pow(3));
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    let n = m.ncols;
    for j in 0..n {
        m.data.swap(a * n + j, b * n + j);
    }
}

/// `tr(B C) = Σ_ij B_ij C_ji` without forming the product; charged `nnz(C)`.
pub fn trace_product(b: &DenseMatrix, c: &SparseMatrix, ledger: &mut CostLedger) -> Result<C64> {
    if b.ncols != c.nrows() {
        return Err(TraceError::DimensionMismatch {
            op: "trace_product",
            expected: b.ncols,
            got: c.nrows(),
        });
    }
    if b.nrows != c.ncols() {
        return Err(TraceError::DimensionMismatch {
            op: "trace_product",
            expected: b.nrows,
            got: c.ncols(),
        });
    }
    // Σ_j Σ_i C_ji B_ij, walking the rows of C.
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..c.nrows() {
        let (cols, vals) = c.row(j);
        for (&i, &v) in cols.iter().zip(vals) {
            acc += v * b.get(i, j);
        }
    }
    ledger.charge(CostCategory::TraceProduct, c.nnz() as u64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let data = (0..n * m)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DenseMatrix::from_row_major(n, m, data).unwrap()
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        let d = a.sub(b).unwrap().norm_max();
        assert!(d <= tol, "max deviation {d:e} > {tol:e}");
    }

    #[test]
    fn invert_identity_and_diagonal() {
        let mut ledger = CostLedger::new();
        assert_eq!(dense_invert(&DenseMatrix::identity(4), &mut ledger).unwrap(), DenseMatrix::identity(4));
        assert_eq!(ledger.total(), 64);
        let d = DenseMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let inv = dense_invert(&d, &mut ledger).unwrap();
        assert_close(&inv, &DenseMatrix::from_real_rows(&[&[0.5, 0.0], &[0.0, 0.25]]), 0.0);
    }

    #[test]
    fn invert_two_by_two_formula() {
        let a = DenseMatrix::from_real_rows(&[&[4.0, -1.0], &[-1.0, 4.0]]);
        let inv = dense_invert(&a, &mut CostLedger::new()).unwrap();
        let expected = DenseMatrix::from_real_rows(&[&[4.0 / 15.0, 1.0 / 15.0], &[1.0 / 15.0, 4.0 / 15.0]]);
        assert_close(&inv, &expected, 1e-15);
    }

    #[test]
    fn invert_random_recovers_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 5, 17, 40] {
            let a = random_dense(n, n, &mut rng);
            let inv = dense_invert(&a, &mut CostLedger::new()).unwrap();
            let tol = 1e-8 * a.norm_max() * n as f64;
            assert_close(&a.matmul(&inv).unwrap(), &DenseMatrix::identity(n), tol);
        }
    }

    #[test]
    fn invert_singular_fails() {
        let a = DenseMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(dense_invert(&a, &mut CostLedger::new()), Err(TraceError::Singular { .. })));
        let z = DenseMatrix::zeros(3, 3);
        assert!(dense_invert(&z, &mut CostLedger::new()).is_err());
    }

    #[test]
    fn trace_product_examples() {
        let mut ledger = CostLedger::new();
        let c = SparseMatrix::from_diagonal(&crate::sparse::vector::real(&[1.0, 2.0, 3.0]));
        let t = trace_product(&DenseMatrix::identity(3), &c, &mut ledger).unwrap();
        assert_eq!(t, C64::new(6.0, 0.0));
        assert_eq!(ledger.total(), 3);

        let b = DenseMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let swap = SparseMatrix::from_dense(&DenseMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(trace_product(&b, &swap, &mut ledger).unwrap(), C64::new(5.0, 0.0));
    }

    #[test]
    fn trace_product_is_cyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = random_dense(4, 4, &mut rng);
            let c = random_dense(4, 4, &mut rng);
            let mut l = CostLedger::new();
            let bc = trace_product(&b, &SparseMatrix::from_dense(&c), &mut l).unwrap();
            let cb = trace_product(&c, &SparseMatrix::from_dense(&b), &mut l).unwrap();
            assert!((bc - cb).norm() <= 1e-12 * bc.norm().max(1.0));
            let explicit = b.matmul(&c).unwrap().trace();
            assert!((bc - explicit).norm() <= 1e-12 * bc.norm().max(1.0));
        }
    }

    #[test]
    fn trace_product_rectangular_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_dense(3, 5, &mut rng);
        let c = random_dense(5, 3, &mut rng);
        let t = trace_product(&b, &SparseMatrix::from_dense(&c), &mut CostLedger::new()).unwrap();
        assert!((t - b.matmul(&c).unwrap().trace()).norm() < 1e-12);
        let bad = random_dense(4, 3, &mut rng);
        assert!(trace_product(&b, &SparseMatrix::from_dense(&bad), &mut CostLedger::new()).is_err());
    }
}
