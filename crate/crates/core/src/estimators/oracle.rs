use serde::{Deserialize, Serialize};

use crate::sparse::{DenseMatrix, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::Distribution;

/// Exact mean and population variance of `x* A x` over every vector of a
/// finite distribution: `2ⁿ` sign vectors (n ≤ 8) or `4ⁿ` z4 vectors (n ≤ 4).
pub fn enumerate_variance(a: &DenseMatrix, dist: Distribution) -> Result<(C64, f64)> {
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            op: "enumerate_variance",
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    let n = a.nrows();
    let (symbols, limit): (&[C64], usize) = match dist {
        Distribution::Rademacher => (&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)], 8),
        Distribution::Z4 => (
            &[C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)],
            4,
        ),
        other => {
            return Err(TraceError::InvalidArgument(format!(
                "{other} has no finite support to enumerate"
            )))
        }
    };
    if n == 0 || n > limit {
        return Err(TraceError::TooLarge {
            n,
            limit,
            hint: "; enumeration grows exponentially",
        });
    }
    let base = symbols.len();
    let count = base.pow(n as u32);
    let mut values = Vec::with_capacity(count);
    let mut x = vec![C64::new(0.0, 0.0); n];
    for code in 0..count {
        let mut c = code;
        for xi in x.iter_mut() {
            *xi = symbols[c % base];
            c /= base;
        }
        let mut v = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                v += x[i].conj() * a.get(i, j) * x[j];
            }
        }
        values.push(v);
    }
    let mean = values.iter().sum::<C64>() / count as f64;
    let variance = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / count as f64;
    Ok((mean, variance))
}

/// Closed-form variance of one Hutchinson sample `x* A x`.
///
/// Rademacher: `½‖offdiag(A + Aᵀ)‖²_F`; z4 and uniform phase: `‖offdiag(A)‖²_F`;
/// real Gaussian: `½‖A + Aᵀ‖²_F`.
pub fn predicted_variance(a: &SparseMatrix, dist: Distribution) -> Result<f64> {
    match dist {
        Distribution::Rademacher => a.frobenius_offdiag_sym_sq(),
        Distribution::Z4 | Distribution::UniformPhase => a.frobenius_offdiag_sq(),
        Distribution::Gaussian => Ok(0.5 * a.add(&a.transpose())?.frobenius_sq()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub samples: Vec<u64>,
    pub mu: f64,
    /// `Σ N_ℓ C_ℓ` for the rounded sample counts.
    pub predicted_cost: f64,
}

/// Sample counts minimizing `Σ N_ℓ C_ℓ` subject to `Σ V_ℓ/N_ℓ ≤ ε²`:
/// `N_ℓ = ⌈μ √(V_ℓ/C_ℓ)⌉` with `μ = ε⁻² Σ_k √(V_k C_k)`.
pub fn optimal_allocation(variances: &[f64], costs: &[f64], epsilon: f64) -> Result<Allocation> {
    if variances.len() != costs.len() {
        return Err(TraceError::DimensionMismatch {
            op: "optimal_allocation",
            expected: variances.len(),
            got: costs.len(),
        });
    }
    if !(epsilon > 0.0) || variances.iter().any(|v| !(*v >= 0.0)) || costs.iter().any(|c| !(*c > 0.0)) {
        return Err(TraceError::InvalidArgument(
            "allocation needs V ≥ 0, C > 0 and epsilon > 0".into(),
        ));
    }
    let mu = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum::<f64>() / (epsilon * epsilon);
    let samples: Vec<u64> = variances
        .iter()
        .zip(costs)
        .map(|(v, c)| {
            let raw = mu * (v / c).sqrt();
            // guard against 7.999999 → 8 style rounding from the square roots
            let rounded = raw.round();
            if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
                rounded as u64
            } else {
                raw.ceil() as u64
            }
        })
        .collect();
    let predicted_cost = samples.iter().zip(costs).map(|(n, c)| *n as f64 * c).sum();
    Ok(Allocation {
        samples,
        mu,
        predicted_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_real_rows(rows)
    }

    #[test]
    fn hand_checked_enumerations() {
        let a = dense(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let (m, v) = enumerate_variance(&a, Distribution::Rademacher).unwrap();
        assert!((m - C64::new(2.0, 0.0)).norm() < 1e-15 && (v - 4.0).abs() < 1e-12);
        let (m, v) = enumerate_variance(&a, Distribution::Z4).unwrap();
        assert!((m - C64::new(2.0, 0.0)).norm() < 1e-15 && (v - 4.0).abs() < 1e-12);
        let skew = dense(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(enumerate_variance(&skew, Distribution::Rademacher).unwrap().1.abs() < 1e-15);
        assert!((enumerate_variance(&skew, Distribution::Z4).unwrap().1 - 2.0).abs() < 1e-12);
        let diag = dense(&[&[3.0, 0.0, 0.0], &[0.0, -7.0, 0.0], &[0.0, 0.0, 0.25]]);
        assert_eq!(enumerate_variance(&diag, Distribution::Z4).unwrap().1, 0.0);
    }

    #[test]
    fn enumeration_limits() {
        assert!(enumerate_variance(&DenseMatrix::identity(5), Distribution::Z4).is_err());
        assert!(enumerate_variance(&DenseMatrix::identity(9), Distribution::Rademacher).is_err());
        assert!(enumerate_variance(&DenseMatrix::identity(8), Distribution::Rademacher).is_ok());
        assert!(enumerate_variance(&DenseMatrix::identity(2), Distribution::Gaussian).is_err());
    }

    #[test]
    fn allocation_examples() {
        let a = optimal_allocation(&[4.0, 1.0], &[1.0, 4.0], 1.0).unwrap();
        assert_eq!(a.mu, 4.0);
        assert_eq!(a.samples, vec![8, 2]);
        assert_eq!(a.predicted_cost, 16.0);
        let single = optimal_allocation(&[3.0], &[7.0], 0.5).unwrap();
        assert_eq!(single.samples, vec![12]);
        assert_eq!(optimal_allocation(&[0.0, 1.0], &[1.0, 1.0], 1.0).unwrap().samples, vec![0, 1]);
        assert_eq!(optimal_allocation(&[0.0, 0.0], &[1.0, 2.0], 1.0).unwrap().samples, vec![0, 0]);
        assert!(optimal_allocation(&[1.0], &[0.0], 1.0).is_err());
    }

    fn matrix(n: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n * n).prop_map(move |v| {
            DenseMatrix::from_row_major(n, n, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn allocation_meets_constraint(
            vc in proptest::collection::vec((0.0..100.0f64, 0.1..50.0f64), 1..6),
            eps in 0.01..2.0f64,
        ) {
            let (v, c): (Vec<f64>, Vec<f64>) = vc.into_iter().unzip();
            let a = optimal_allocation(&v, &c, eps).unwrap();
            let err: f64 = v.iter().zip(&a.samples).filter(|(vi, _)| **vi > 0.0).map(|(vi, n)| vi / *n as f64).sum();
            prop_assert!(err <= eps * eps * (1.0 + 1e-9));
        }

        #[test]
        fn z4_variance_formula(a in (1usize..=3).prop_flat_map(matrix)) {
            let (mean, var) = enumerate_variance(&a, Distribution::Z4).unwrap();
            let s = SparseMatrix::from_dense(&a);
            prop_assert!((mean - a.trace()).norm() <= 1e-12 * (1.0 + a.trace().norm()));
            let predicted = predicted_variance(&s, Distribution::Z4).unwrap();
            prop_assert!((var - predicted).abs() <= 1e-12 * (1.0 + predicted));
        }

        #[test]
        fn rademacher_variance_formula(a in (1usize..=5).prop_flat_map(matrix)) {
            let (mean, var) = enumerate_variance(&a, Distribution::Rademacher).unwrap();
            let s = SparseMatrix::from_dense(&a);
            prop_assert!((mean - a.trace()).norm() <= 1e-12 * (1.0 + a.trace().norm()));
            let predicted = predicted_variance(&s, Distribution::Rademacher).unwrap();
            prop_assert!((var - predicted).abs() <= 1e-12 * (1.0 + predicted));
        }
    }
}
