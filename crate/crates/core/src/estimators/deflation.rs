use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::solvers::LevelSolver;
use crate::sparse::vector::{axpy, dot, norm2};
use crate::sparse::{CostCategory, CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::sampling::{hutchinson_with_direct, DirectTerm, EstimateResult, StoppingRule, TraceSampler};
use super::Distribution;

/// Orthonormal eigenvectors `U` and eigenvalues of a Hermitian operator,
/// used to split `tr(A⁻¹) = Σ 1/λ_i + tr(A⁻¹(I − UU*))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflationBasis {
    dim: usize,
    vectors: Vec<Vec<C64>>,
    eigenvalues: Vec<f64>,
}

impl DeflationBasis {
    pub fn new(dim: usize, vectors: Vec<Vec<C64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.len() != eigenvalues.len() {
            return Err(TraceError::DimensionMismatch {
                op: "deflation basis",
                expected: vectors.len(),
                got: eigenvalues.len(),
            });
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(TraceError::DimensionMismatch {
                op: "deflation vector",
                expected: dim,
                got: v.len(),
            });
        }
        if eigenvalues.iter().any(|l| *l == 0.0) {
            return Err(TraceError::InvalidArgument("deflated eigenvalues must be non-zero".into()));
        }
        Ok(Self {
            dim,
            vectors,
            eigenvalues,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            eigenvalues: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    /// `Σ 1/λ_i = tr(A⁻¹ UU*)`.
    pub fn inverse_sum(&self) -> f64 {
        self.eigenvalues.iter().map(|l| 1.0 / l).sum()
    }

    /// `x − U(U*x)`, charged `2·n·n_defl`.
    pub fn project_out(&self, x: &[C64], ledger: &mut CostLedger) -> Vec<C64> {
        let mut y = x.to_vec();
        if self.vectors.is_empty() {
            return y;
        }
        let coeffs: Vec<C64> = self.vectors.iter().map(|u| dot(u, x)).collect();
        for (c, u) in coeffs.iter().zip(&self.vectors) {
            axpy(-c, u, &mut y);
        }
        ledger.charge(CostCategory::Projection, (2 * self.dim * self.vectors.len()) as u64);
        y
    }

    /// `max |U*U − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, u) in self.vectors.iter().enumerate() {
            for (j, v) in self.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(u, v) - target).norm());
            }
        }
        worst
    }

    /// `max_i ‖A u_i − λ_i u_i‖₂`.
    pub fn max_residual(&self, a: &SparseMatrix) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (u, l) in self.vectors.iter().zip(&self.eigenvalues) {
            let mut r = a.spmv(u, &mut CostLedger::new())?;
            axpy(C64::new(-l, 0.0), u, &mut r);
            worst = worst.max(norm2(&r));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Extra subspace vectors beyond the requested count; `None` picks
    /// `max(8, k/2)`.
    pub oversample: Option<usize>,
    pub max_outer: usize,
    /// Residual tolerance relative to `‖A‖₁`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            oversample: None,
            max_outer: 200,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// The `k` smallest eigenpairs of a Hermitian positive definite `A` by
/// inverse subspace iteration with Rayleigh–Ritz. `solver` must apply `A⁻¹`
/// on level 0; its accuracy bounds the attainable residual.
pub fn smallest_eigenpairs(
    a: &SparseMatrix,
    k: usize,
    solver: &dyn LevelSolver,
    config: &EigenConfig,
    ledger: &mut CostLedger,
) -> Result<DeflationBasis> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            op: "smallest_eigenpairs",
            nrows: n,
            ncols: a.ncols(),
        });
    }
    if k > n {
        return Err(TraceError::InvalidArgument(format!("cannot take {k} eigenpairs of a {n}×{n} matrix")));
    }
    if k == 0 {
        return Ok(DeflationBasis::empty(n));
    }
    let m = (k + config.oversample.unwrap_or((k / 2).max(8))).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut basis: Vec<Vec<C64>> = (0..m).map(|_| random_vector(n, &mut rng)).collect();
    orthonormalize(&mut basis, &mut rng);
    let tol = config.tol * a.norm_one();
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_outer {
        let solved: Vec<(Vec<C64>, CostLedger)> = basis
            .par_iter()
            .map(|v| {
                let mut l = CostLedger::new();
                solver.solve(0, v, &mut l).map(|w| (w, l))
            })
            .collect::<Result<_>>()?;
        let mut w: Vec<Vec<C64>> = Vec::with_capacity(m);
        for (wi, l) in solved {
            ledger.merge(&l);
            w.push(wi);
        }
        orthonormalize(&mut w, &mut rng);
        let aw: Vec<Vec<C64>> = w.iter().map(|v| a.spmv(v, ledger)).collect::<Result<_>>()?;
        let h = DMatrix::from_fn(m, m, |i, j| {
            0.5 * (dot(&w[i], &aw[j]) + dot(&w[j], &aw[i]).conj())
        });
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let combine = |src: &[Vec<C64>], col: usize| -> Vec<C64> {
            let mut out = vec![C64::new(0.0, 0.0); n];
            for (s, q) in src.iter().zip(eig.eigenvectors.column(col).iter()) {
                axpy(*q, s, &mut out);
            }
            out
        };
        let ritz: Vec<Vec<C64>> = order.iter().map(|&c| combine(&w, c)).collect();
        let values: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        residual = 0.0;
        for (i, &c) in order.iter().take(k).enumerate() {
            let mut r = combine(&aw, c);
            axpy(C64::new(-values[i], 0.0), &ritz[i], &mut r);
            residual = residual.max(norm2(&r));
        }
        basis = ritz;
        if residual <= tol {
            basis.truncate(k);
            let mut values = values;
            values.truncate(k);
            return DeflationBasis::new(n, basis, values);
        }
    }
    Err(TraceError::EigenNotConverged {
        iterations: config.max_outer,
        residual,
    })
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

/// Two-pass modified Gram–Schmidt; a collapsed column is replaced by a
/// fresh random vector.
fn orthonormalize(vectors: &mut [Vec<C64>], rng: &mut ChaCha8Rng) {
    for k in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(k);
        let v = &mut rest[0];
        for attempt in 0..3 {
            let before = norm2(v);
            for _ in 0..2 {
                for q in done.iter() {
                    let c = dot(q, v);
                    axpy(-c, q, v);
                }
            }
            let after = norm2(v);
            if after > 1e-10 * before && after > 0.0 {
                v.iter_mut().for_each(|x| *x /= after);
                break;
            }
            assert!(attempt < 2, "could not extend an orthonormal basis");
            *v = random_vector(v.len(), rng);
        }
    }
}

struct DeflatedSampler<'a> {
    solver: &'a dyn LevelSolver,
    basis: &'a DeflationBasis,
}

impl TraceSampler for DeflatedSampler<'_> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn sample(&self, x: &[C64], ledger: &mut CostLedger) -> Result<C64> {
        let projected = self.basis.project_out(x, ledger);
        let y = self.solver.solve(0, &projected, ledger)?;
        Ok(dot(x, &y))
    }
}

/// Hutchinson on `A⁻¹(I − UU*)` plus the exact `Σ 1/λ_i`. Shares the sample
/// stream of plain Hutchinson, so an empty basis reproduces it exactly.
pub fn deflated_hutchinson(
    solver: &dyn LevelSolver,
    basis: &DeflationBasis,
    dist: Distribution,
    rule: &StoppingRule,
    seed: u64,
) -> Result<EstimateResult> {
    let sampler = DeflatedSampler { solver, basis };
    let direct = (!basis.is_empty()).then(|| DirectTerm {
        value: C64::new(basis.inverse_sum(), 0.0),
        cost: CostLedger::new(),
    });
    hutchinson_with_direct(&sampler, dist, rule, seed, direct)
}
