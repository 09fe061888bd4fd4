use std::sync::Arc;

use crate::multigrid::Hierarchy;
use crate::sparse::vector::{axpy, norm2};
use crate::sparse::{CostCategory, CostLedger, DenseMatrix, C64};
use crate::{Result, TraceError};

use super::{checked_diagonal, dense_inverse_of, fgmres, LevelSolver, SolveConfig, SolveReport, SolverMode};

/// V-cycle multigrid over a shared hierarchy, usable as a solver on any level.
/// The coarsest level is solved with a precomputed dense inverse charged `n_c²`
/// per application.
#[derive(Debug, Clone)]
pub struct MultigridSolver {
    hierarchy: Arc<Hierarchy>,
    diagonals: Vec<Vec<C64>>,
    coarse_inverse: DenseMatrix,
    config: SolveConfig,
}

impl MultigridSolver {
    /// Setup work (the coarsest dense inverse) is charged to `ledger`.
    pub fn new(hierarchy: Arc<Hierarchy>, config: SolveConfig, ledger: &mut CostLedger) -> Result<Self> {
        if config.rtol <= 0.0 || config.max_iter == 0 || config.krylov_restart == 0 {
            return Err(TraceError::InvalidArgument(
                "solver needs rtol > 0, max_iter > 0 and krylov_restart > 0".into(),
            ));
        }
        let diagonals = hierarchy
            .levels()
            .iter()
            .map(|l| checked_diagonal(&l.a))
            .collect::<Result<_>>()?;
        let coarse = hierarchy.operator(hierarchy.num_levels() - 1);
        let coarse_inverse = dense_inverse_of(coarse, ledger)?;
        Ok(Self {
            hierarchy,
            diagonals,
            coarse_inverse,
            config,
        })
    }

    pub fn hierarchy(&self) -> &Arc<Hierarchy> {
        &self.hierarchy
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    fn coarsest(&self) -> usize {
        self.hierarchy.num_levels() - 1
    }

    /// One V-cycle for `A_ℓ x = b` starting from `x = 0`.
    pub fn vcycle(&self, level: usize, b: &[C64], ledger: &mut CostLedger) -> Result<Vec<C64>> {
        if level == self.coarsest() {
            return self.coarse_inverse.matvec(b, ledger, CostCategory::CoarseSolve);
        }
        let lv = self.hierarchy.level(level);
        let (p, r) = (lv.p.as_ref().unwrap(), lv.r.as_ref().unwrap());
        let diag = &self.diagonals[level];
        let mut x = vec![C64::new(0.0, 0.0); b.len()];
        for _ in 0..self.config.nu_pre {
            super::gauss_seidel_sweep(&lv.a, diag, b, &mut x, true, ledger)?;
        }
        let mut res = vec![C64::new(0.0, 0.0); b.len()];
        lv.a.residual_into(b, &x, &mut res, ledger)?;
        let rc = r.apply(&res, ledger, CostCategory::Transfer)?;
        let ec = self.vcycle(level + 1, &rc, ledger)?;
        let e = p.apply(&ec, ledger, CostCategory::Transfer)?;
        axpy(C64::new(1.0, 0.0), &e, &mut x);
        for _ in 0..self.config.nu_post {
            super::gauss_seidel_sweep(&lv.a, diag, b, &mut x, false, ledger)?;
        }
        Ok(x)
    }

    /// Solves `A_ℓ x = b` to relative residual `rtol`.
    pub fn solve_with_report(&self, level: usize, b: &[C64], ledger: &mut CostLedger) -> Result<(Vec<C64>, SolveReport)> {
        if level >= self.hierarchy.num_levels() {
            return Err(TraceError::InvalidArgument(format!(
                "level {level} outside a hierarchy of {} levels",
                self.hierarchy.num_levels()
            )));
        }
        let a = self.hierarchy.operator(level);
        if b.len() != a.nrows() {
            return Err(TraceError::DimensionMismatch {
                op: "multigrid solve",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok((vec![C64::new(0.0, 0.0); b.len()], SolveReport { iterations: 0, relres: 0.0 }));
        }
        if level == self.coarsest() {
            let x = self.coarse_inverse.matvec(b, ledger, CostCategory::CoarseSolve)?;
            return Ok((x, SolveReport { iterations: 1, relres: 0.0 }));
        }
        match self.config.mode {
            SolverMode::Stationary => self.stationary(level, b, bnorm, ledger),
            SolverMode::FlexibleKrylov => fgmres(
                a,
                b,
                |r, led| self.vcycle(level, r, led),
                self.config.rtol,
                self.config.max_iter,
                self.config.krylov_restart,
                ledger,
            ),
        }
    }

    fn stationary(&self, level: usize, b: &[C64], bnorm: f64, ledger: &mut CostLedger) -> Result<(Vec<C64>, SolveReport)> {
        let a = self.hierarchy.operator(level);
        let mut x = self.vcycle(level, b, ledger)?;
        let mut res = vec![C64::new(0.0, 0.0); b.len()];
        let mut relres = f64::INFINITY;
        for it in 1..=self.config.max_iter {
            a.residual_into(b, &x, &mut res, ledger)?;
            relres = norm2(&res) / bnorm;
            if relres <= self.config.rtol {
                return Ok((x, SolveReport { iterations: it, relres }));
            }
            if !relres.is_finite() {
                break;
            }
            let e = self.vcycle(level, &res, ledger)?;
            axpy(C64::new(1.0, 0.0), &e, &mut x);
        }
        Err(TraceError::NotConverged {
            iterations: self.config.max_iter,
            final_relres: relres,
        })
    }

    /// Convergence factor estimate: geometric mean residual reduction per
    /// V-cycle over `cycles` stationary iterations on a fixed right-hand side.
    pub fn convergence_factor(&self, level: usize, cycles: usize) -> Result<f64> {
        let a = self.hierarchy.operator(level);
        let n = a.nrows();
        let b: Vec<C64> = (0..n).map(|i| C64::new(((i * 7919) % 13) as f64 - 6.0, 0.0)).collect();
        let mut ledger = CostLedger::new();
        let mut x = vec![C64::new(0.0, 0.0); n];
        let mut res = b.clone();
        let r0 = norm2(&res);
        for _ in 0..cycles {
            let e = self.vcycle(level, &res, &mut ledger)?;
            axpy(C64::new(1.0, 0.0), &e, &mut x);
            a.residual_into(&b, &x, &mut res, &mut ledger)?;
        }
        Ok((norm2(&res) / r0).powf(1.0 / cycles as f64))
    }
}

impl LevelSolver for MultigridSolver {
    fn solve(&self, level: usize, b: &[C64], ledger: &mut CostLedger) -> Result<Vec<C64>> {
        self.solve_with_report(level, b, ledger).map(|(x, _)| x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{draw_gauge_field, gen_gauge_laplace, gen_laplace2d, gen_schwinger, SchwingerParams};
    use crate::multigrid::{build_aggregation_hierarchy, build_geometric_hierarchy, AggregationConfig, LatticeLayout};
    use crate::sparse::vector::sub;

    fn relres(a: &crate::SparseMatrix, x: &[C64], b: &[C64]) -> f64 {
        norm2(&sub(b, &a.spmv(x, &mut CostLedger::new()).unwrap())) / norm2(b)
    }

    fn laplace_solver(n: usize, levels: usize, mode: SolverMode) -> MultigridSolver {
        let a = gen_laplace2d(n).unwrap();
        let h = build_geometric_hierarchy(&a, n, levels, &mut CostLedger::new()).unwrap();
        let cfg = SolveConfig { mode, ..SolveConfig::default() };
        MultigridSolver::new(Arc::new(h), cfg, &mut CostLedger::new()).unwrap()
    }

    #[test]
    fn laplace_vcycle_convergence_factor() {
        let s = laplace_solver(63, 4, SolverMode::Stationary);
        let rho = s.convergence_factor(0, 10).unwrap();
        assert!(rho <= 0.2, "rho = {rho}");
    }

    #[test]
    fn stationary_and_krylov_reach_tolerance() {
        for mode in [SolverMode::Stationary, SolverMode::FlexibleKrylov] {
            let s = laplace_solver(31, 3, mode);
            let b: Vec<C64> = (0..961).map(|i| C64::new((i % 5) as f64, (i % 3) as f64)).collect();
            for level in 0..3 {
                let bl = &b[..s.hierarchy().size(level)];
                let (x, rep) = s.solve_with_report(level, bl, &mut CostLedger::new()).unwrap();
                assert!(relres(s.hierarchy().operator(level), &x, bl) <= 1e-8, "{mode:?} level {level}");
                assert!(rep.relres <= 1e-8);
            }
        }
    }

    #[test]
    fn two_level_vcycle_contracts_error() {
        let s = laplace_solver(31, 2, SolverMode::Stationary);
        let a = s.hierarchy().operator(0).clone();
        for trial in 0..5u64 {
            let x_true = crate::estimators::draw_vector(
                961,
                crate::estimators::Distribution::Gaussian,
                &mut crate::estimators::sample_rng(trial, 0, 0),
            );
            let b = a.spmv(&x_true, &mut CostLedger::new()).unwrap();
            let x = s.vcycle(0, &b, &mut CostLedger::new()).unwrap();
            let ratio = norm2(&sub(&x, &x_true)) / norm2(&x_true);
            assert!(ratio <= 0.5, "trial {trial}: {ratio}");
        }
    }

    #[test]
    fn manufactured_solution_recovered() {
        let a = gen_laplace2d(15).unwrap();
        let h = build_geometric_hierarchy(&a, 15, 2, &mut CostLedger::new()).unwrap();
        let cfg = SolveConfig { rtol: 1e-12, ..SolveConfig::default() };
        let s = MultigridSolver::new(Arc::new(h), cfg, &mut CostLedger::new()).unwrap();
        let ones = vec![C64::new(1.0, 0.0); 225];
        let b = a.spmv(&ones, &mut CostLedger::new()).unwrap();
        let (x, _) = s.solve_with_report(0, &b, &mut CostLedger::new()).unwrap();
        assert!(crate::sparse::vector::max_abs_diff(&x, &ones) <= 1e-10);
    }

    #[test]
    fn loose_tolerance_needs_few_iterations() {
        let a = gen_laplace2d(31).unwrap();
        let h = build_geometric_hierarchy(&a, 31, 3, &mut CostLedger::new()).unwrap();
        let cfg = SolveConfig { rtol: 0.5, ..SolveConfig::default() };
        let s = MultigridSolver::new(Arc::new(h), cfg, &mut CostLedger::new()).unwrap();
        let (_, rep) = s.solve_with_report(0, &vec![C64::new(1.0, 0.0); 961], &mut CostLedger::new()).unwrap();
        assert!(rep.iterations <= 3 && rep.relres <= 0.5);
    }

    #[test]
    fn one_level_vcycle_is_direct_solve() {
        let a = gen_laplace2d(5).unwrap();
        let h = crate::multigrid::Hierarchy::single(a.clone()).unwrap();
        let s = MultigridSolver::new(Arc::new(h), SolveConfig::default(), &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..25).map(|i| C64::new(i as f64, 0.0)).collect();
        let x = s.vcycle(0, &b, &mut CostLedger::new()).unwrap();
        assert!(relres(&a, &x, &b) < 1e-13);
    }

    #[test]
    fn stationary_residuals_decrease_monotonically() {
        let s = laplace_solver(63, 4, SolverMode::Stationary);
        let a = s.hierarchy().operator(0);
        let b: Vec<C64> = (0..3969).map(|i| C64::new(((i * 13) % 7) as f64, 0.0)).collect();
        let mut x = vec![C64::new(0.0, 0.0); 3969];
        let mut res = b.clone();
        let mut last = norm2(&b);
        for _ in 0..8 {
            let e = s.vcycle(0, &res, &mut CostLedger::new()).unwrap();
            axpy(C64::new(1.0, 0.0), &e, &mut x);
            a.residual_into(&b, &x, &mut res, &mut CostLedger::new()).unwrap();
            assert!(norm2(&res) <= last);
            last = norm2(&res);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let s = laplace_solver(15, 2, SolverMode::Stationary);
        let (x, rep) = s.solve_with_report(0, &vec![C64::new(0.0, 0.0); 225], &mut CostLedger::new()).unwrap();
        assert!(x.iter().all(|v| *v == C64::new(0.0, 0.0)));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let a = gen_laplace2d(31).unwrap();
        let h = build_geometric_hierarchy(&a, 31, 3, &mut CostLedger::new()).unwrap();
        let cfg = SolveConfig {
            max_iter: 1,
            rtol: 1e-14,
            nu_pre: 0,
            nu_post: 1,
            ..SolveConfig::default()
        };
        let s = MultigridSolver::new(Arc::new(h), cfg, &mut CostLedger::new()).unwrap();
        let b = vec![C64::new(1.0, 0.0); 961];
        assert!(matches!(
            s.solve_with_report(0, &b, &mut CostLedger::new()),
            Err(TraceError::NotConverged { .. })
        ));
    }

    #[test]
    fn vcycle_charges_expected_units() {
        let s = laplace_solver(15, 2, SolverMode::Stationary);
        let h = s.hierarchy().clone();
        let mut ledger = CostLedger::new();
        s.vcycle(0, &vec![C64::new(1.0, 0.0); 225], &mut ledger).unwrap();
        let nnz = h.operator(0).nnz() as u64;
        assert_eq!(ledger.category(CostCategory::Smoothing), 2 * nnz);
        assert_eq!(ledger.category(CostCategory::Residual), nnz);
        let p = h.level(0).p.as_ref().unwrap().nnz() as u64;
        assert_eq!(ledger.category(CostCategory::Transfer), 2 * p);
        assert_eq!(ledger.category(CostCategory::CoarseSolve), 49 * 49);
        assert!(ledger.is_balanced());
    }

    #[test]
    fn gauge_laplacian_krylov_solve() {
        let g = gen_gauge_laplace(&draw_gauge_field(32, 0.1, 2).unwrap()).unwrap();
        let cfg = AggregationConfig {
            block: 2,
            coarse_dofs: vec![2, 2, 2],
            ..AggregationConfig::default()
        };
        let h = build_aggregation_hierarchy(&g, LatticeLayout::scalar(32), &cfg, &mut CostLedger::new()).unwrap();
        let solve_cfg = SolveConfig {
            mode: SolverMode::FlexibleKrylov,
            nu_pre: 1,
            nu_post: 1,
            ..SolveConfig::default()
        };
        let s = MultigridSolver::new(Arc::new(h), solve_cfg, &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..1024).map(|i| C64::new(1.0, (i % 7) as f64)).collect();
        let (x, rep) = s.solve_with_report(0, &b, &mut CostLedger::new()).unwrap();
        assert!(relres(&g, &x, &b) <= 1e-8, "{rep:?}");
    }

    #[test]
    fn schwinger_16_negative_mass() {
        let field = draw_gauge_field(16, 0.05, 7).unwrap();
        let a = gen_schwinger(&SchwingerParams { mass: -0.1, field }).unwrap();
        let cfg = AggregationConfig {
            coarse_dofs: vec![4],
            ..AggregationConfig::default()
        };
        let h = build_aggregation_hierarchy(&a, LatticeLayout::spin_major(16, 2), &cfg, &mut CostLedger::new()).unwrap();
        let solve_cfg = SolveConfig {
            mode: SolverMode::FlexibleKrylov,
            nu_pre: 2,
            nu_post: 2,
            rtol: 1e-9,
            ..SolveConfig::default()
        };
        let s = MultigridSolver::new(Arc::new(h), solve_cfg, &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..512).map(|i| C64::new(1.0, (i % 3) as f64)).collect();
        let (x, rep) = s.solve_with_report(0, &b, &mut CostLedger::new()).unwrap();
        assert!(relres(&a, &x, &b) <= 1e-9, "{rep:?}");
    }

    #[test]
    fn schwinger_krylov_solve() {
        let field = draw_gauge_field(32, 0.1, 4).unwrap();
        let a = gen_schwinger(&SchwingerParams { mass: 0.05, field }).unwrap();
        let cfg = AggregationConfig {
            coarse_dofs: vec![4, 8],
            ..AggregationConfig::default()
        };
        let h = build_aggregation_hierarchy(&a, LatticeLayout::spin_major(32, 2), &cfg, &mut CostLedger::new()).unwrap();
        let solve_cfg = SolveConfig {
            mode: SolverMode::FlexibleKrylov,
            ..SolveConfig::default()
        };
        let s = MultigridSolver::new(Arc::new(h), solve_cfg, &mut CostLedger::new()).unwrap();
        let b: Vec<C64> = (0..2048).map(|i| C64::new((i % 11) as f64, -1.0)).collect();
        let (x, rep) = s.solve_with_report(0, &b, &mut CostLedger::new()).unwrap();
        assert!(relres(&a, &x, &b) <= 1e-8, "{rep:?}");
    }
}
