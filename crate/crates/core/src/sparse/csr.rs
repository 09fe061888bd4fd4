use super::{CostCategory, CostLedger, DenseMatrix, C64};
use crate::{Result, TraceError};

/// Row-compressed complex sparse matrix.
///
/// Column indices are strictly increasing within each row and the matrix is
/// immutable once built. Stored entries are structural: an entry whose value
/// happens to be zero still counts towards `nnz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Builds from raw CSR arrays, validating every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<C64>,
    ) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(TraceError::InvalidStructure(format!(
                "dimensions must be positive, got {nrows}x{ncols}"
            )));
        }
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(TraceError::InvalidStructure(
                "row pointer array must have nrows+1 entries starting at 0".into(),
            ));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != values.len() {
            return Err(TraceError::InvalidStructure(
                "index and value arrays disagree with the row pointers".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            if lo > hi {
                return Err(TraceError::InvalidStructure(format!(
                    "row pointers decrease at row {i}"
                )));
            }
            let cols = &indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TraceError::InvalidStructure(format!(
                    "column indices in row {i} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return Err(TraceError::InvalidStructure(format!(
                    "column index out of range in row {i}"
                )));
            }
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(TraceError::InvalidStructure("non-finite value".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(TraceError::InvalidStructure(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::new(nrows, ncols, indptr, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Sparse copy of a dense matrix, keeping only nonzero entries.
    pub fn from_dense(a: &DenseMatrix) -> Self {
        let triplets = (0..a.nrows()).flat_map(|i| {
            (0..a.ncols()).filter_map(move |j| {
                let v = a.get(i, j);
                (v != C64::new(0.0, 0.0)).then_some((i, j, v))
            })
        });
        Self::from_triplets(a.nrows(), a.ncols(), triplets.collect::<Vec<_>>())
            .expect("dense matrix yields valid triplets")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `A x`, charged as a plain matrix-vector product.
    pub fn spmv(&self, x: &[C64], ledger: &mut CostLedger) -> Result<Vec<C64>> {
        self.apply(x, ledger, CostCategory::Matvec)
    }

    /// `A x`, charged `nnz(A)` units under `category`.
    pub fn apply(&self, x: &[C64], ledger: &mut CostLedger, category: CostCategory) -> Result<Vec<C64>> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.apply_into(x, &mut y, ledger, category)?;
        Ok(y)
    }

    pub fn apply_into(
        &self,
        x: &[C64],
        y: &mut [C64],
        ledger: &mut CostLedger,
        category: CostCategory,
    ) -> Result<()> {
        if x.len() != self.ncols {
            return Err(TraceError::DimensionMismatch {
                op: "spmv",
                expected: self.ncols,
                got: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(TraceError::DimensionMismatch {
                op: "spmv output",
                expected: self.nrows,
                got: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..hi {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
        ledger.charge(category, self.nnz() as u64);
        Ok(())
    }

    /// `r = b - A x`, charged `nnz(A)` as a residual computation.
    pub fn residual_into(
        &self,
        b: &[C64],
        x: &[C64],
        r: &mut [C64],
        ledger: &mut CostLedger,
    ) -> Result<()> {
        self.apply_into(x, r, ledger, CostCategory::Residual)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        self.transpose_map(|v| v)
    }

    /// Conjugate transpose `A*`.
    pub fn adjoint(&self) -> Self {
        self.transpose_map(|v| v.conj())
    }

    fn transpose_map(&self, f: impl Fn(C64) -> C64) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![C64::new(0.0, 0.0); self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let dst = next[j];
                indices[dst] = i;
                values[dst] = f(v);
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse-sparse product `A B`. Charges, for every stored `a_ik`, the
    /// number of entries in row `k` of `B`.
    pub fn matmul(&self, other: &SparseMatrix, ledger: &mut CostLedger) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(TraceError::DimensionMismatch {
                op: "sparse product",
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut marker = vec![usize::MAX; other.ncols];
        let mut acc = vec![C64::new(0.0, 0.0); other.ncols];
        let mut row_cols: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut work = 0u64;
        indptr.push(0);
        for i in 0..self.nrows {
            row_cols.clear();
            let (acols, avals) = self.row(i);
            for (&k, &a) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                work += bcols.len() as u64;
                for (&j, &b) in bcols.iter().zip(bvals) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = a * b;
                        row_cols.push(j);
                    } else {
                        acc[j] += a * b;
                    }
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        ledger.charge(CostCategory::SparseProduct, work);
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Entrywise `self + other` on the union of both patterns.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.combine(other, C64::new(1.0, 0.0))
    }

    /// Entrywise `self - other` on the union of both patterns.
    pub fn sub(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.combine(other, C64::new(-1.0, 0.0))
    }

    fn combine(&self, other: &SparseMatrix, sign: C64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(TraceError::DimensionMismatch {
                op: "sparse sum",
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        let triplets = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, sign * v)))
            .collect::<Vec<_>>();
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    pub fn scaled(&self, alpha: C64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (&j, v) in self.indices.iter().zip(&self.values) {
            sums[j] += v.norm();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `Σ_{i≠j} |a_ij|²`.
    pub fn frobenius_offdiag_sq(&self) -> Result<f64> {
        self.require_square("frobenius_offdiag_sq")?;
        Ok(self
            .triplets()
            .filter(|(i, j, _)| i != j)
            .map(|(_, _, v)| v.norm_sqr())
            .sum())
    }

    /// `½ Σ_{i≠j} |a_ij + a_ji|²` with the plain (unconjugated) transpose.
    pub fn frobenius_offdiag_sym_sq(&self) -> Result<f64> {
        self.require_square("frobenius_offdiag_sym_sq")?;
        let sym = self.add(&self.transpose())?;
        Ok(0.5
            * sym
                .triplets()
                .filter(|(i, j, _)| i != j)
                .map(|(_, _, v)| v.norm_sqr())
                .sum::<f64>())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d.set(i, j, v);
        }
        d
    }

    /// Largest entrywise deviation between two matrices of equal shape.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> Result<f64> {
        Ok(self.sub(other)?.norm_max())
    }

    fn require_square(&self, op: &'static str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(TraceError::NotSquare {
                op,
                nrows: self.nrows,
                ncols: self.ncols,
            })
        }
    }
}
