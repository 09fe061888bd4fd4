use crate::sparse::vector::{axpy, dot, norm2};
use crate::sparse::{CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::SolveReport;

/// Right-preconditioned restarted flexible GMRES for `A x = b` from `x = 0`.
/// `precondition` may change between iterations.
pub fn fgmres<F>(
    a: &SparseMatrix,
    b: &[C64],
    mut precondition: F,
    rtol: f64,
    max_iter: usize,
    restart: usize,
    ledger: &mut CostLedger,
) -> Result<(Vec<C64>, SolveReport)>
where
    F: FnMut(&[C64], &mut CostLedger) -> Result<Vec<C64>>,
{
    let n = a.nrows();
    if b.len() != n {
        return Err(TraceError::DimensionMismatch {
            op: "fgmres",
            expected: n,
            got: b.len(),
        });
    }
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm2(b);
    let mut x = vec![zero; n];
    if bnorm == 0.0 {
        return Ok((x, SolveReport { iterations: 0, relres: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut relres = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        let beta = norm2(&r);
        relres = beta / bnorm;
        if relres <= rtol {
            return Ok((x, SolveReport { iterations, relres }));
        }
        let m = restart.min(max_iter - iterations);
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|&ri| ri / beta).collect()];
        let mut z: Vec<Vec<C64>> = Vec::with_capacity(m);
        // Hessenberg columns, already rotated
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;
        while k < m {
            let zk = precondition(&v[k], ledger)?;
            let mut w = a.spmv(&zk, ledger)?;
            z.push(zk);
            let mut col = vec![zero; k + 2];
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(vi, &w);
                    col[i] += c;
                    axpy(-c, vi, &mut w);
                }
            }
            let hn = norm2(&w);
            col[k + 1] = C64::new(hn, 0.0);
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a0, a1) = (col[i], col[i + 1]);
                col[i] = c * a0 + s * a1;
                col[i + 1] = -s.conj() * a0 + c * a1;
            }
            let (c, s, rho) = givens(col[k], col[k + 1]);
            col[k] = C64::new(rho, 0.0) * phase(col[k]);
            col[k + 1] = zero;
            let gk = g[k];
            g[k] = c * gk;
            g[k + 1] = -s.conj() * gk;
            cs.push((c, s));
            h.push(col);
            k += 1;
            iterations += 1;
            relres = g[k].norm() / bnorm;
            if relres <= rtol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|&wi| wi / hn).collect());
        }
        // back substitution on the rotated upper-triangular system
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yj, zj) in y.iter().zip(&z) {
            axpy(*yj, zj, &mut x);
        }
        a.residual_into(b, &x, &mut r, ledger)?;
        relres = norm2(&r) / bnorm;
        if relres <= rtol {
            return Ok((x, SolveReport { iterations, relres }));
        }
        if !relres.is_finite() {
            break;
        }
    }
    Err(TraceError::NotConverged {
        iterations,
        final_relres: relres,
    })
}

fn phase(a: C64) -> C64 {
    let r = a.norm();
    if r == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        a / r
    }
}

/// Rotation `[c s; −s̄ c]` mapping `(a, b)` to `(phase(a)·ρ, 0)`.
fn givens(a: C64, b: C64) -> (f64, C64, f64) {
    let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if rho == 0.0 {
        return (1.0, C64::new(0.0, 0.0), 0.0);
    }
    let c = a.norm() / rho;
    let s = phase(a) * b.conj() / rho;
    (c, s, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_laplace2d;
    use crate::sparse::vector::{max_abs_diff, sub};
    use proptest::prelude::*;

    #[test]
    fn unpreconditioned_solves_small_system() {
        let a = gen_laplace2d(6).unwrap();
        let b: Vec<C64> = (0..36).map(|i| C64::new(i as f64, 2.0)).collect();
        let (x, rep) = fgmres(&a, &b, |r, _| Ok(r.to_vec()), 1e-10, 200, 40, &mut CostLedger::new()).unwrap();
        let r = sub(&b, &a.spmv(&x, &mut CostLedger::new()).unwrap());
        assert!(norm2(&r) / norm2(&b) <= 1e-10, "{rep:?}");
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let a = gen_laplace2d(4).unwrap();
        let inv = crate::sparse::dense_invert(&a.to_dense(), &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..16).map(|i| C64::new(1.0, i as f64)).collect();
        let (x, rep) = fgmres(
            &a,
            &b,
            |r, l| inv.matvec(r, l, crate::CostCategory::CoarseSolve),
            1e-12,
            10,
            5,
            &mut CostLedger::new(),
        )
        .unwrap();
        assert_eq!(rep.iterations, 1);
        let exact = inv.matvec(&b, &mut CostLedger::new(), crate::CostCategory::CoarseSolve).unwrap();
        assert!(max_abs_diff(&x, &exact) < 1e-12);
    }

    #[test]
    fn restarts_hit_iteration_cap() {
        let a = gen_laplace2d(20).unwrap();
        let b = vec![C64::new(1.0, 0.0); 400];
        let res = fgmres(&a, &b, |r, _| Ok(r.to_vec()), 1e-12, 6, 3, &mut CostLedger::new());
        assert!(matches!(res, Err(TraceError::NotConverged { iterations: 6, .. })));
    }

    proptest! {
        #[test]
        fn givens_annihilates(ar in -3.0..3.0f64, ai in -3.0..3.0f64, br in -3.0..3.0f64, bi in -3.0..3.0f64) {
            let (a, b) = (C64::new(ar, ai), C64::new(br, bi));
            let (c, s, rho) = givens(a, b);
            let top = c * a + s * b;
            let bottom = -s.conj() * a + c * b;
            prop_assert!(bottom.norm() <= 1e-12 * (1.0 + rho));
            prop_assert!((top.norm() - rho).abs() <= 1e-12 * (1.0 + rho));
            prop_assert!((c * c + s.norm_sqr() - 1.0).abs() <= 1e-12 || rho == 0.0);
        }
    }
}
