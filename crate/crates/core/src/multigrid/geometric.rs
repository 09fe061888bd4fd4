use crate::sparse::{CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::{galerkin_levels, Hierarchy, HierarchyKind};

/// 1d linear interpolation from `nc` interior points to `2nc + 1`.
fn linear_prolongation_1d(nf: usize, nc: usize) -> Vec<(usize, usize, f64)> {
    debug_assert_eq!(nf, 2 * nc + 1);
    let mut t = Vec::with_capacity(3 * nc);
    for c in 0..nc {
        let f = 2 * c + 1;
        t.push((f - 1, c, 0.5));
        t.push((f, c, 1.0));
        t.push((f + 1, c, 0.5));
    }
    t
}

/// Bilinear interpolation from an `N_c×N_c` Dirichlet grid to `N_f×N_f`,
/// `N_f = 2N_c + 1`. Coarse point `(a,b)` sits on fine point `(2a+1, 2b+1)`.
pub fn bilinear_prolongation(n_fine: usize, n_coarse: usize) -> Result<SparseMatrix> {
    if n_coarse == 0 || n_fine != 2 * n_coarse + 1 {
        return Err(TraceError::InvalidArgument(format!(
            "bilinear interpolation needs N_fine = 2·N_coarse + 1, got {n_fine} and {n_coarse}"
        )));
    }
    let one_d = linear_prolongation_1d(n_fine, n_coarse);
    let mut triplets = Vec::with_capacity(one_d.len() * one_d.len());
    for &(fi, ci, wi) in &one_d {
        for &(fj, cj, wj) in &one_d {
            triplets.push((fi * n_fine + fj, ci * n_coarse + cj, C64::new(wi * wj, 0.0)));
        }
    }
    SparseMatrix::from_triplets(n_fine * n_fine, n_coarse * n_coarse, triplets)
}

/// Geometric hierarchy for the Dirichlet Laplacian on an `N×N` grid with
/// `N_{ℓ+1} = ⌊N_ℓ/2⌋`, bilinear `P_ℓ`, `R_ℓ = P_ℓ*` and Galerkin coarse
/// operators. Every `N_ℓ` must be odd and at least 3.
pub fn build_geometric_hierarchy(
    a: &SparseMatrix,
    n: usize,
    num_levels: usize,
    ledger: &mut CostLedger,
) -> Result<Hierarchy> {
    if num_levels == 0 {
        return Err(TraceError::InvalidArgument("a hierarchy needs at least one level".into()));
    }
    if a.nrows() != n * n || !a.is_square() {
        return Err(TraceError::DimensionMismatch {
            op: "geometric hierarchy",
            expected: n * n,
            got: a.nrows(),
        });
    }
    let mut extents = vec![n];
    for _ in 1..num_levels {
        let fine = *extents.last().unwrap();
        if fine % 2 == 0 {
            return Err(TraceError::Hierarchy(format!(
                "grid extent {fine} is even; Dirichlet coarsening needs odd extents"
            )));
        }
        extents.push(fine / 2);
    }
    if let Some(&bad) = extents.iter().find(|&&e| e < 3) {
        return Err(TraceError::Hierarchy(format!(
            "{num_levels} levels are too deep for N = {n} (extent would reach {bad})"
        )));
    }
    if num_levels > 1 && extents.iter().any(|e| e % 2 == 0) {
        return Err(TraceError::Hierarchy(format!(
            "extents {extents:?} are not all odd"
        )));
    }
    let prolongations = extents
        .windows(2)
        .map(|w| bilinear_prolongation(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let levels = galerkin_levels(a.clone(), prolongations, ledger)?;
    Hierarchy::new(levels, HierarchyKind::Geometric, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_laplace2d;

    #[test]
    fn single_coarse_point_stencil() {
        let p = bilinear_prolongation(3, 1).unwrap();
        let col: Vec<f64> = (0..9).map(|i| p.get(i, 0).re).collect();
        assert_eq!(col, vec![0.25, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 0.25]);
    }

    #[test]
    fn interpolation_reproduces_coarse_point_values() {
        let p = bilinear_prolongation(15, 7).unwrap();
        let fine = p.spmv(&vec![C64::new(1.0, 0.0); 49], &mut CostLedger::new()).unwrap();
        for a in 0..7 {
            for b in 0..7 {
                assert_eq!(fine[(2 * a + 1) * 15 + 2 * b + 1], C64::new(1.0, 0.0));
            }
        }
        let pt = p.transpose();
        for c in 0..49 {
            let (_, vals) = pt.row(c);
            assert!(vals.iter().map(|v| v.re).sum::<f64>() <= 4.0 + 1e-15);
        }
    }

    #[test]
    fn interior_columns_have_nine_entries() {
        let p = bilinear_prolongation(7, 3).unwrap().transpose();
        assert_eq!(p.row(4).0.len(), 9);
        assert!(p.indptr().windows(2).all(|w| w[1] - w[0] == 9));
    }

    #[test]
    fn incompatible_sizes_rejected() {
        assert!(bilinear_prolongation(8, 4).is_err());
        assert!(bilinear_prolongation(7, 2).is_err());
    }

    #[test]
    fn laplace_63_chain() {
        let a = gen_laplace2d(63).unwrap();
        let h = build_geometric_hierarchy(&a, 63, 3, &mut CostLedger::new()).unwrap();
        assert_eq!(h.sizes(), vec![3969, 961, 225]);
        assert_eq!(h.nnzs(), vec![19593, 8281, 1849]);
        assert!(h.galerkin_defect().unwrap() <= 1e-12);
        assert!(!h.is_orthonormal());
    }

    #[test]
    fn depth_limits() {
        let a = gen_laplace2d(127).unwrap();
        let h = build_geometric_hierarchy(&a, 127, 4, &mut CostLedger::new()).unwrap();
        assert_eq!(*h.sizes().last().unwrap(), 225);
        let a15 = gen_laplace2d(15).unwrap();
        assert!(build_geometric_hierarchy(&a15, 15, 3, &mut CostLedger::new()).is_ok());
        assert!(build_geometric_hierarchy(&a15, 15, 4, &mut CostLedger::new()).is_err());
        let a16 = gen_laplace2d(16).unwrap();
        assert!(build_geometric_hierarchy(&a16, 16, 2, &mut CostLedger::new()).is_err());
        let one = build_geometric_hierarchy(&a15, 15, 1, &mut CostLedger::new()).unwrap();
        assert_eq!(one.num_levels(), 1);
        assert_eq!(one.prolong_acc(0), &SparseMatrix::identity(225));
    }
}
