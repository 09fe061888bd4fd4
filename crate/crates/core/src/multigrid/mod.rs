//! Multigrid hierarchies `(A_ℓ, P_ℓ, R_ℓ)` with Galerkin coarse operators
//! `A_{ℓ+1} = R_ℓ A_ℓ P_ℓ` and the accumulated transfers
//! `P̂_ℓ = P_1⋯P_{ℓ−1}`, `R̂_ℓ = R_{ℓ−1}⋯R_1`.
//!
//! Levels are indexed from 0 in code; level 0 is the finest.

mod aggregation;
mod dump;
mod geometric;

pub use aggregation::{
    aggregation_prolongation, build_aggregation_hierarchy, AggregationConfig, DofOrdering, LatticeLayout,
};
pub use dump::{write_hierarchy, HierarchyManifest, LevelManifest};
pub use geometric::{bilinear_prolongation, build_geometric_hierarchy};

use serde::{Deserialize, Serialize};

use crate::sparse::{CostLedger, SparseMatrix};
use crate::{Result, TraceError};

/// Tolerance for the `R_ℓ P_ℓ = I` check that sets the orthonormal flag.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Level {
    pub a: SparseMatrix,
    /// Prolongation to this level from the next coarser one; absent on the coarsest level.
    pub p: Option<SparseMatrix>,
    pub r: Option<SparseMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyKind {
    Geometric,
    Aggregation,
}

/// An immutable multigrid hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    prolong_acc: Vec<SparseMatrix>,
    restrict_acc: Vec<SparseMatrix>,
    kind: HierarchyKind,
    orthonormal: bool,
}

impl Hierarchy {
    /// Validates the level chain and forms the accumulated transfers.
    pub fn new(levels: Vec<Level>, kind: HierarchyKind, ledger: &mut CostLedger) -> Result<Self> {
        validate_chain(&levels)?;
        let (prolong_acc, restrict_acc) = accumulate_transfers(&levels, ledger)?;
        let mut orthonormal = true;
        for level in &levels[..levels.len() - 1] {
            let (p, r) = (level.p.as_ref().unwrap(), level.r.as_ref().unwrap());
            let rp = r.matmul(p, &mut CostLedger::new())?;
            if rp.max_abs_diff(&SparseMatrix::identity(rp.nrows()))? > ORTHONORMAL_TOL {
                orthonormal = false;
                break;
            }
        }
        Ok(Self {
            levels,
            prolong_acc,
            restrict_acc,
            kind,
            orthonormal,
        })
    }

    /// A single-level hierarchy holding only `A`.
    pub fn single(a: SparseMatrix) -> Result<Self> {
        Self::new(
            vec![Level { a, p: None, r: None }],
            HierarchyKind::Geometric,
            &mut CostLedger::new(),
        )
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn operator(&self, l: usize) -> &SparseMatrix {
        &self.levels[l].a
    }

    pub fn size(&self, l: usize) -> usize {
        self.levels[l].a.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nrows()).collect()
    }

    pub fn nnzs(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nnz()).collect()
    }

    /// `P̂_ℓ`, an `n × n_ℓ` matrix (the identity for `ℓ = 0`).
    pub fn prolong_acc(&self, l: usize) -> &SparseMatrix {
        &self.prolong_acc[l]
    }

    /// `R̂_ℓ`, an `n_ℓ × n` matrix (the identity for `ℓ = 0`).
    pub fn restrict_acc(&self, l: usize) -> &SparseMatrix {
        &self.restrict_acc[l]
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    /// True iff `R_ℓ P_ℓ = I` was verified on every level, which implies
    /// `R̂_ℓ P̂_ℓ = I`.
    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Largest deviation of a stored coarse operator from a recomputed
    /// `R_ℓ A_ℓ P_ℓ`, relative to the largest entry of that operator.
    pub fn galerkin_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in self.levels.windows(2) {
            let (fine, coarse) = (&w[0], &w[1]);
            let recomputed = galerkin_coarse(
                fine.r.as_ref().unwrap(),
                &fine.a,
                fine.p.as_ref().unwrap(),
                &mut CostLedger::new(),
            )?;
            let scale = coarse.a.norm_max().max(f64::MIN_POSITIVE);
            worst = worst.max(coarse.a.max_abs_diff(&recomputed)? / scale);
        }
        Ok(worst)
    }
}

fn validate_chain(levels: &[Level]) -> Result<()> {
    if levels.is_empty() {
        return Err(TraceError::Hierarchy("a hierarchy needs at least one level".into()));
    }
    for (l, level) in levels.iter().enumerate() {
        if !level.a.is_square() {
            return Err(TraceError::NotSquare {
                op: "hierarchy level",
                nrows: level.a.nrows(),
                ncols: level.a.ncols(),
            });
        }
        let last = l + 1 == levels.len();
        match (&level.p, &level.r, last) {
            (None, None, true) => {}
            (Some(p), Some(r), false) => {
                let (n, nc) = (level.a.nrows(), levels[l + 1].a.nrows());
                if p.nrows() != n || p.ncols() != nc || r.nrows() != nc || r.ncols() != n {
                    return Err(TraceError::Hierarchy(format!(
                        "transfer operators on level {l} do not connect sizes {n} and {nc}"
                    )));
                }
            }
            _ => {
                return Err(TraceError::Hierarchy(format!(
                    "level {l}: transfers must be present exactly on non-coarsest levels"
                )))
            }
        }
    }
    Ok(())
}

/// `R A P`, charged under the sparse-product rule.
pub fn galerkin_coarse(
    r: &SparseMatrix,
    a: &SparseMatrix,
    p: &SparseMatrix,
    ledger: &mut CostLedger,
) -> Result<SparseMatrix> {
    let ap = a.matmul(p, ledger)?;
    r.matmul(&ap, ledger)
}

/// `(P̂_ℓ, R̂_ℓ)` for every level, formed left to right with `P̂_0 = R̂_0 = I`.
pub fn accumulate_transfers(
    levels: &[Level],
    ledger: &mut CostLedger,
) -> Result<(Vec<SparseMatrix>, Vec<SparseMatrix>)> {
    validate_chain(levels)?;
    let n = levels[0].a.nrows();
    let mut prolong = vec![SparseMatrix::identity(n)];
    let mut restrict = vec![SparseMatrix::identity(n)];
    for (l, level) in levels[..levels.len() - 1].iter().enumerate() {
        let (p, r) = (level.p.as_ref().unwrap(), level.r.as_ref().unwrap());
        if l == 0 {
            prolong.push(p.clone());
            restrict.push(r.clone());
        } else {
            let next_p = prolong[l].matmul(p, ledger)?;
            let next_r = r.matmul(&restrict[l], ledger)?;
            prolong.push(next_p);
            restrict.push(next_r);
        }
    }
    Ok((prolong, restrict))
}

/// Builds a level list from operators and prolongations with `R = P*`.
pub fn galerkin_levels(a: SparseMatrix, prolongations: Vec<SparseMatrix>, ledger: &mut CostLedger) -> Result<Vec<Level>> {
    let mut levels = Vec::with_capacity(prolongations.len() + 1);
    let mut current = a;
    for p in prolongations {
        let r = p.adjoint();
        let coarse = galerkin_coarse(&r, &current, &p, ledger)?;
        levels.push(Level {
            a: current,
            p: Some(p),
            r: Some(r),
        });
        current = coarse;
    }
    levels.push(Level {
        a: current,
        p: None,
        r: None,
    });
    Ok(levels)
}
