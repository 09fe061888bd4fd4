use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::solvers::{dense_inverse_of, gauss_seidel_sweep};
use crate::sparse::vector::{dot, norm2};
use crate::sparse::{CostCategory, CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::{galerkin_coarse, Hierarchy, HierarchyKind, Level};

/// Relative pivot size below which an aggregate block counts as rank deficient.
const PIVOT_TOL: f64 = 1e-12;

/// Largest first-pass coarse operator inverted densely during the
/// improvement cycles; larger ones get Gauss–Seidel sweeps instead.
const IMPROVE_DENSE_LIMIT: usize = 1024;
const IMPROVE_COARSE_SWEEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofOrdering {
    /// `site · dofs + dof`.
    SiteMajor,
    /// `dof · sites + site`, the layout produced by the Schwinger generator.
    DofMajor,
}

/// How vector entries map to lattice sites of an `extent × extent` torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeLayout {
    pub extent: usize,
    pub dofs: usize,
    pub ordering: DofOrdering,
}

impl LatticeLayout {
    pub fn scalar(extent: usize) -> Self {
        Self {
            extent,
            dofs: 1,
            ordering: DofOrdering::SiteMajor,
        }
    }

    pub fn spin_major(extent: usize, dofs: usize) -> Self {
        Self {
            extent,
            dofs,
            ordering: DofOrdering::DofMajor,
        }
    }

    pub fn sites(&self) -> usize {
        self.extent * self.extent
    }

    pub fn size(&self) -> usize {
        self.sites() * self.dofs
    }

    pub fn index(&self, site: usize, dof: usize) -> usize {
        match self.ordering {
            DofOrdering::SiteMajor => site * self.dofs + dof,
            DofOrdering::DofMajor => dof * self.sites() + site,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationConfig {
    /// Edge length of the square aggregates.
    pub block: usize,
    /// Coarse degrees of freedom per aggregate, one entry per coarsening step.
    pub coarse_dofs: Vec<usize>,
    /// Gauss–Seidel sweeps on `A x = 0` applied to the random start vectors.
    pub relax_sweeps: usize,
    /// Two-level cycles on `A x = 0` with the first-pass prolongation,
    /// applied before the final prolongation is formed.
    pub improvement_sweeps: usize,
    pub seed: u64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            block: 4,
            coarse_dofs: vec![4, 8, 8],
            relax_sweeps: 5,
            improvement_sweeps: 8,
            seed: 0,
        }
    }
}

/// Aggregation hierarchy with one level per entry of `config.coarse_dofs`
/// beyond the finest. Coarse levels use site-major ordering.
pub fn build_aggregation_hierarchy(
    a: &SparseMatrix,
    layout: LatticeLayout,
    config: &AggregationConfig,
    ledger: &mut CostLedger,
) -> Result<Hierarchy> {
    if a.nrows() != layout.size() || !a.is_square() {
        return Err(TraceError::DimensionMismatch {
            op: "aggregation hierarchy",
            expected: layout.size(),
            got: a.nrows(),
        });
    }
    let mut levels = Vec::new();
    let mut current = a.clone();
    let mut current_layout = layout;
    for (l, &d) in config.coarse_dofs.iter().enumerate() {
        if current_layout.extent % config.block != 0 || current_layout.extent / config.block == 0 {
            return Err(TraceError::Hierarchy(format!(
                "level {l}: extent {} is not divisible into {}×{} aggregates",
                current_layout.extent, config.block, config.block
            )));
        }
        let seed = config.seed.wrapping_add(l as u64);
        let mut vectors = test_vectors(&current, d, config.relax_sweeps, seed, ledger)?;
        if config.improvement_sweeps > 0 {
            improve_test_vectors(&current, current_layout, config.block, &mut vectors, config.improvement_sweeps, ledger)?;
        }
        let p = aggregation_prolongation(current_layout, config.block, &vectors)?;
        let r = p.adjoint();
        let coarse = galerkin_coarse(&r, &current, &p, ledger)?;
        levels.push(Level {
            a: current,
            p: Some(p),
            r: Some(r),
        });
        current = coarse;
        current_layout = LatticeLayout {
            extent: current_layout.extent / config.block,
            dofs: d,
            ordering: DofOrdering::SiteMajor,
        };
    }
    levels.push(Level {
        a: current,
        p: None,
        r: None,
    });
    Hierarchy::new(levels, HierarchyKind::Aggregation, ledger)
}

/// Random test vectors smoothed with Gauss–Seidel on `A x = 0`, then
/// orthonormalized.
fn test_vectors(a: &SparseMatrix, count: usize, sweeps: usize, seed: u64, ledger: &mut CostLedger) -> Result<Vec<Vec<C64>>> {
    let n = a.nrows();
    let diag = a.diagonal();
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors: Vec<Vec<C64>> = (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im)
                })
                .collect()
        })
        .collect();
    for v in vectors.iter_mut() {
        for _ in 0..sweeps {
            gauss_seidel_sweep(a, &diag, &zero, v, true, ledger)?;
            normalize(v);
        }
    }
    orthonormalize(&mut vectors);
    Ok(vectors)
}

/// Runs two-level cycles on `A x = 0`, rebuilding the prolongation from the
/// current vectors before each one. Components the coarse space resolves are
/// damped, so the vectors drift towards the modes it misses.
fn improve_test_vectors(
    a: &SparseMatrix,
    layout: LatticeLayout,
    block: usize,
    vectors: &mut [Vec<C64>],
    cycles: usize,
    ledger: &mut CostLedger,
) -> Result<()> {
    let diag = a.diagonal();
    let mut res = vec![C64::new(0.0, 0.0); a.nrows()];
    for _ in 0..cycles {
        let p = aggregation_prolongation(layout, block, vectors)?;
        let r = p.adjoint();
        let ac = galerkin_coarse(&r, a, &p, ledger)?;
        let coarse_inverse = if ac.nrows() <= IMPROVE_DENSE_LIMIT {
            Some(dense_inverse_of(&ac, ledger)?)
        } else {
            None
        };
        let diag_c = ac.diagonal();
        for v in vectors.iter_mut() {
            // x ≈ A⁻¹ v from one two-level cycle started at zero
            let mut x = vec![C64::new(0.0, 0.0); v.len()];
            gauss_seidel_sweep(a, &diag, v, &mut x, true, ledger)?;
            a.residual_into(v, &x, &mut res, ledger)?;
            let rc = r.apply(&res, ledger, CostCategory::Transfer)?;
            let ec = match &coarse_inverse {
                Some(inv) => inv.matvec(&rc, ledger, CostCategory::CoarseSolve)?,
                None => {
                    let mut ec = vec![C64::new(0.0, 0.0); rc.len()];
                    for _ in 0..IMPROVE_COARSE_SWEEPS {
                        gauss_seidel_sweep(&ac, &diag_c, &rc, &mut ec, true, ledger)?;
                        gauss_seidel_sweep(&ac, &diag_c, &rc, &mut ec, false, ledger)?;
                    }
                    ec
                }
            };
            let e = p.apply(&ec, ledger, CostCategory::Transfer)?;
            x.iter_mut().zip(&e).for_each(|(x, y)| *x += y);
            gauss_seidel_sweep(a, &diag, v, &mut x, false, ledger)?;
            normalize(&mut x);
            *v = x;
        }
        orthonormalize(vectors);
    }
    Ok(())
}

fn normalize(v: &mut [C64]) {
    let norm = norm2(v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Modified Gram–Schmidt, two passes. Dependent vectors end up as zero.
fn orthonormalize(vectors: &mut [Vec<C64>]) {
    for _ in 0..2 {
        for k in 0..vectors.len() {
            let (done, rest) = vectors.split_at_mut(k);
            let v = &mut rest[0];
            for q in done.iter() {
                let c = dot(q, v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            let norm = norm2(v);
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}

/// Chops the test vectors into `block × block` aggregates and orthonormalizes
/// each piece with a pivoted QR. Column `agg · d + k` of the result is the
/// `k`-th orthonormal vector of aggregate `agg`, where aggregates are numbered
/// row-major over the coarse lattice.
pub fn aggregation_prolongation(
    layout: LatticeLayout,
    block: usize,
    test_vectors: &[Vec<C64>],
) -> Result<SparseMatrix> {
    let d = test_vectors.len();
    if d == 0 {
        return Err(TraceError::InvalidArgument("at least one test vector is required".into()));
    }
    if block == 0 || layout.extent % block != 0 {
        return Err(TraceError::Hierarchy(format!(
            "extent {} is not divisible by aggregate size {block}",
            layout.extent
        )));
    }
    if let Some(v) = test_vectors.iter().find(|v| v.len() != layout.size()) {
        return Err(TraceError::DimensionMismatch {
            op: "aggregation test vector",
            expected: layout.size(),
            got: v.len(),
        });
    }
    let n = layout.extent;
    let nc = n / block;
    let mut triplets = Vec::with_capacity(layout.size() * d);
    for ai in 0..nc {
        for aj in 0..nc {
            let agg = ai * nc + aj;
            let mut rows = Vec::with_capacity(block * block * layout.dofs);
            for u in 0..block {
                for v in 0..block {
                    let site = (ai * block + u) * n + aj * block + v;
                    for dof in 0..layout.dofs {
                        rows.push(layout.index(site, dof));
                    }
                }
            }
            let local: Vec<Vec<C64>> = test_vectors
                .iter()
                .map(|tv| rows.iter().map(|&r| tv[r]).collect())
                .collect();
            let q = pivoted_qr(local).map_err(|pivot| TraceError::RankDeficientAggregate { aggregate: agg, pivot })?;
            for (k, col) in q.iter().enumerate() {
                for (&r, &val) in rows.iter().zip(col) {
                    if val != C64::new(0.0, 0.0) {
                        triplets.push((r, agg * d + k, val));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(layout.size(), nc * nc * d, triplets)
}

/// Orthonormal basis of the span of `cols`, choosing the largest remaining
/// column at each step. Returns the offending relative pivot on rank deficiency.
fn pivoted_qr(mut cols: Vec<Vec<C64>>) -> std::result::Result<Vec<Vec<C64>>, f64> {
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(0.0);
    }
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(cols.len());
    while !cols.is_empty() {
        let (best, _) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm2(c)))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut v = cols.swap_remove(best);
        let pivot = norm2(&v);
        if pivot < PIVOT_TOL * scale {
            return Err(pivot / scale);
        }
        // reorthogonalize once for orthonormality near machine precision
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &v);
                v.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = norm2(&v);
        if norm < PIVOT_TOL * scale {
            return Err(norm / scale);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for c in cols.iter_mut() {
            let proj = dot(&v, c);
            c.iter_mut().zip(&v).for_each(|(x, y)| *x -= proj * y);
        }
        q.push(v);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{draw_gauge_field, gen_gauge_laplace, gen_schwinger, SchwingerParams};

    #[test]
    fn constant_vector_gives_scaled_indicators() {
        let layout = LatticeLayout::scalar(4);
        let p = aggregation_prolongation(layout, 2, &[vec![C64::new(1.0, 0.0); 16]]).unwrap();
        assert_eq!((p.nrows(), p.ncols()), (16, 4));
        for i in 0..4 {
            for j in 0..4 {
                let agg = (i / 2) * 2 + j / 2;
                for c in 0..4 {
                    let expect = if c == agg { 0.5 } else { 0.0 };
                    assert_eq!(p.get(i * 4 + j, c), C64::new(expect, 0.0));
                }
            }
        }
    }

    #[test]
    fn dependent_vectors_name_the_aggregate() {
        let layout = LatticeLayout::scalar(4);
        let mut v2 = vec![C64::new(1.0, 0.0); 16];
        // independent everywhere except aggregate 3 (rows 10, 11, 14, 15)
        for (k, x) in v2.iter_mut().enumerate() {
            if ![10, 11, 14, 15].contains(&k) {
                *x = C64::new(k as f64, 0.0);
            }
        }
        let err = aggregation_prolongation(layout, 2, &[vec![C64::new(1.0, 0.0); 16], v2]).unwrap_err();
        match err {
            TraceError::RankDeficientAggregate { aggregate, .. } => assert_eq!(aggregate, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn indivisible_extent_rejected() {
        let layout = LatticeLayout::scalar(6);
        assert!(aggregation_prolongation(layout, 4, &[vec![C64::new(1.0, 0.0); 36]]).is_err());
    }

    #[test]
    fn layout_indexing() {
        let s = LatticeLayout::spin_major(4, 2);
        assert_eq!(s.index(3, 1), 19);
        let t = LatticeLayout { ordering: DofOrdering::SiteMajor, ..s };
        assert_eq!(t.index(3, 1), 7);
    }

    #[test]
    fn gauge_hierarchy_is_orthonormal() {
        let g = gen_gauge_laplace(&draw_gauge_field(16, 0.2, 1).unwrap()).unwrap();
        let cfg = AggregationConfig {
            block: 2,
            coarse_dofs: vec![2, 2],
            ..AggregationConfig::default()
        };
        let h = build_aggregation_hierarchy(&g, LatticeLayout::scalar(16), &cfg, &mut CostLedger::new()).unwrap();
        assert_eq!(h.sizes(), vec![256, 128, 32]);
        assert!(h.is_orthonormal());
        for l in 0..3 {
            let rp = h
                .restrict_acc(l)
                .matmul(h.prolong_acc(l), &mut CostLedger::new())
                .unwrap();
            assert!(rp.max_abs_diff(&SparseMatrix::identity(h.size(l))).unwrap() <= 1e-12);
        }
        assert!(h.galerkin_defect().unwrap() <= 1e-12);
    }

    #[test]
    fn schwinger_sizes() {
        let field = draw_gauge_field(32, 0.1, 5).unwrap();
        let s = gen_schwinger(&SchwingerParams { mass: 0.1, field }).unwrap();
        let cfg = AggregationConfig {
            coarse_dofs: vec![4, 8],
            ..AggregationConfig::default()
        };
        let h = build_aggregation_hierarchy(&s, LatticeLayout::spin_major(32, 2), &cfg, &mut CostLedger::new()).unwrap();
        assert_eq!(h.sizes(), vec![2048, 256, 32]);
        assert!(h.is_orthonormal());
    }
}
