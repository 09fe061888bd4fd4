//! Problem setup per operator family and execution of single (method, seed)
//! cells, shared by the command-line driver and the acceptance suite.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::estimators::{
    deflated_hutchinson, hutchinson, mlmc_trace, smallest_eigenpairs, DeflationBasis, Distribution, EigenConfig,
    EstimateResult, InverseSampler, StoppingRule,
};
use crate::generators::{
    draw_gauge_field, exact_trace_inv_laplace2d, gen_gauge_laplace, gen_laplace2d, gen_schwinger, Family,
    GaugeField, SchwingerParams,
};
use crate::multigrid::{
    build_aggregation_hierarchy, build_geometric_hierarchy, AggregationConfig, Hierarchy, LatticeLayout,
};
use crate::report::{Method, RunRecord};
use crate::solvers::{dense_inverse_of, MultigridSolver, SolveConfig, SolverMode};
use crate::sparse::{CostLedger, SparseMatrix, SPECTRAL_SIZE_LIMIT};
use crate::{Result, TraceError};

/// Deflation sizes used for the Dirichlet Laplacian when none is given.
pub const LAPLACE_N_DEFL: [(usize, usize); 4] = [(63, 92), (127, 44), (255, 64), (511, 76)];

/// Solve tolerance for the eigensolver's inner solves.
const EIGEN_SOLVE_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub family: Family,
    #[serde(rename = "N")]
    pub n: usize,
    /// Schwinger mass.
    #[serde(rename = "m")]
    pub mass: f64,
    /// Width parameter of the random gauge phases.
    pub beta: f64,
    pub field_seed: u64,
    /// Levels used by the multilevel estimator; family default when absent.
    #[serde(rename = "L")]
    pub mlmc_levels: Option<usize>,
    /// Levels of the solver hierarchy; family default when absent.
    pub solver_depth: Option<usize>,
    pub solver: Option<SolveConfig>,
    pub aggregation: Option<AggregationConfig>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            family: Family::Laplace2d,
            n: 63,
            mass: -0.1,
            beta: 0.009,
            field_seed: 0,
            mlmc_levels: None,
            solver_depth: None,
            solver: None,
            aggregation: None,
        }
    }
}

impl ProblemConfig {
    pub fn laplace(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn gauge(n: usize, beta: f64, field_seed: u64) -> Self {
        Self {
            family: Family::Gauge,
            n,
            beta,
            field_seed,
            ..Self::default()
        }
    }

    pub fn schwinger(n: usize, mass: f64, beta: f64, field_seed: u64) -> Self {
        Self {
            family: Family::Schwinger,
            n,
            mass,
            beta,
            field_seed,
            ..Self::default()
        }
    }

    pub fn gauge_field(&self) -> Result<GaugeField> {
        draw_gauge_field(self.n, self.beta, self.field_seed)
    }

    /// The fine operator of the family.
    pub fn operator(&self) -> Result<SparseMatrix> {
        match self.family {
            Family::Laplace2d => gen_laplace2d(self.n),
            Family::Gauge => gen_gauge_laplace(&self.gauge_field()?),
            Family::Schwinger => gen_schwinger(&SchwingerParams {
                mass: self.mass,
                field: self.gauge_field()?,
            }),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.family != Family::Schwinger
    }

    fn solve_config(&self) -> SolveConfig {
        self.solver.unwrap_or(match self.family {
            Family::Laplace2d => SolveConfig::default(),
            Family::Gauge | Family::Schwinger => SolveConfig {
                nu_pre: 2,
                nu_post: 2,
                mode: SolverMode::FlexibleKrylov,
                ..SolveConfig::default()
            },
        })
    }

    fn aggregation_config(&self) -> AggregationConfig {
        self.aggregation.clone().unwrap_or(match self.family {
            Family::Gauge => AggregationConfig {
                block: 2,
                coarse_dofs: vec![2; 8],
                seed: self.field_seed,
                ..AggregationConfig::default()
            },
            _ => AggregationConfig {
                block: 4,
                coarse_dofs: vec![4, 8, 8, 8, 8, 8],
                seed: self.field_seed,
                ..AggregationConfig::default()
            },
        })
    }

    fn layout(&self) -> LatticeLayout {
        match self.family {
            Family::Schwinger => LatticeLayout::spin_major(self.n, 2),
            _ => LatticeLayout::scalar(self.n),
        }
    }

    /// `(solver depth, multilevel depth)` after applying family defaults.
    pub fn depths(&self) -> Result<(usize, usize)> {
        let (solver_default, mlmc_default) = match self.family {
            Family::Laplace2d => {
                // solver down to 7², estimator down to 15²
                let mut extents = vec![self.n];
                while let Some(&e) = extents.last() {
                    if e % 2 == 0 || e / 2 < 7 {
                        break;
                    }
                    extents.push(e / 2);
                }
                let solver = extents.len();
                let mlmc = extents.iter().filter(|&&e| e >= 15).count().max(2).min(solver);
                (solver, mlmc)
            }
            Family::Gauge | Family::Schwinger => {
                let agg = self.aggregation_config();
                let min_extent = if self.family == Family::Gauge { 4 } else { 2 };
                let mut depth = 1;
                let mut extent = self.n;
                while depth <= agg.coarse_dofs.len() && extent % agg.block == 0 && extent / agg.block >= min_extent {
                    extent /= agg.block;
                    depth += 1;
                }
                (depth, depth)
            }
        };
        let mlmc = self.mlmc_levels.unwrap_or(mlmc_default);
        let solver = self.solver_depth.unwrap_or(solver_default).max(mlmc);
        if mlmc == 0 {
            return Err(TraceError::InvalidArgument("the multilevel estimator needs at least one level".into()));
        }
        Ok((solver, mlmc))
    }
}

/// `tr(A⁻¹)` for `operator`, the fine operator of `config`: analytic for
/// Laplace, from a dense inverse up to the dense limit, else `None`.
pub fn exact_trace(config: &ProblemConfig, operator: &SparseMatrix) -> Result<Option<f64>> {
    match config.family {
        Family::Laplace2d => exact_trace_inv_laplace2d(config.n).map(Some),
        _ if operator.nrows() <= SPECTRAL_SIZE_LIMIT => Ok(Some(dense_inverse_of(operator, &mut CostLedger::new())?.trace().re)),
        _ => Ok(None),
    }
}

/// A built problem: operator, solver hierarchy and multigrid solver.
#[derive(Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub operator: SparseMatrix,
    pub hierarchy: Arc<Hierarchy>,
    pub solver: MultigridSolver,
    pub mlmc_levels: usize,
    /// Hierarchy construction and coarsest factorization; not part of any
    /// estimator's work.
    pub setup_cost: CostLedger,
    bases: Mutex<HashMap<usize, Arc<(DeflationBasis, CostLedger)>>>,
}

impl Problem {
    pub fn build(config: ProblemConfig) -> Result<Self> {
        let operator = config.operator()?;
        let (solver_depth, mlmc_levels) = config.depths()?;
        let mut setup_cost = CostLedger::new();
        let hierarchy = match config.family {
            Family::Laplace2d => build_geometric_hierarchy(&operator, config.n, solver_depth, &mut setup_cost)?,
            Family::Gauge | Family::Schwinger => {
                let mut agg = config.aggregation_config();
                if agg.coarse_dofs.len() < solver_depth - 1 {
                    return Err(TraceError::Hierarchy(format!(
                        "{} coarse levels requested but only {} coarse dof counts configured",
                        solver_depth - 1,
                        agg.coarse_dofs.len()
                    )));
                }
                agg.coarse_dofs.truncate(solver_depth - 1);
                build_aggregation_hierarchy(&operator, config.layout(), &agg, &mut setup_cost)?
            }
        };
        let hierarchy = Arc::new(hierarchy);
        let solver = MultigridSolver::new(hierarchy.clone(), config.solve_config(), &mut setup_cost)?;
        Ok(Self {
            config,
            operator,
            hierarchy,
            solver,
            mlmc_levels,
            setup_cost,
            bases: Mutex::new(HashMap::new()),
        })
    }

    /// `tr(A⁻¹)` from the analytic formula (Laplace) or a dense inverse for
    /// operators up to the dense limit; `None` when neither applies.
    pub fn exact_trace(&self) -> Result<Option<f64>> {
        exact_trace(&self.config, &self.operator)
    }

    /// Deflation size for this problem: explicit, else the tabulated
    /// Laplace value.
    pub fn default_n_defl(&self) -> Option<usize> {
        match self.config.family {
            Family::Laplace2d => LAPLACE_N_DEFL.iter().find(|(n, _)| *n == self.config.n).map(|p| p.1),
            _ => None,
        }
    }

    /// The `k` smallest eigenpairs, computed once per `k` and cached, with
    /// the eigensolver's work.
    pub fn deflation_basis(&self, k: usize, eigen: &EigenConfig) -> Result<Arc<(DeflationBasis, CostLedger)>> {
        if !self.config.is_hermitian() {
            return Err(TraceError::InvalidArgument(format!(
                "deflation needs a Hermitian operator; {} is not",
                self.config.family
            )));
        }
        if let Some(b) = self.bases.lock().unwrap().get(&k) {
            return Ok(b.clone());
        }
        let mut ledger = CostLedger::new();
        let tight = SolveConfig {
            rtol: EIGEN_SOLVE_RTOL,
            ..*self.solver.config()
        };
        let eigen_solver = MultigridSolver::new(self.hierarchy.clone(), tight, &mut ledger)?;
        let basis = smallest_eigenpairs(&self.operator, k, &eigen_solver, eigen, &mut ledger)?;
        let entry = Arc::new((basis, ledger));
        self.bases.lock().unwrap().insert(k, entry.clone());
        Ok(entry)
    }
}

/// Estimator settings shared by all cells of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub dist: Distribution,
    pub epsilon: f64,
    /// Absolute standard-error target; replaces `ε·τ` when present.
    pub abs_tol: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub n_defl: Option<usize>,
    pub max_samples: usize,
    pub eigen: EigenConfig,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            dist: Distribution::Z4,
            epsilon: 1e-3,
            abs_tol: None,
            weights: None,
            n_defl: None,
            max_samples: 1_000_000,
            eigen: EigenConfig::default(),
        }
    }
}

impl EstimatorSettings {
    fn rule(&self, with_weights: bool) -> StoppingRule {
        let mut rule = match self.abs_tol {
            Some(t) => StoppingRule::absolute(t),
            None => StoppingRule::relative(self.epsilon),
        };
        rule.max_samples = self.max_samples;
        if with_weights {
            rule.weights = self.weights.clone();
        }
        rule
    }
}

/// Runs one method with one master seed. Failures are reported in the
/// record's status; partial results of a budget overrun are kept.
pub fn run_cell(problem: &Problem, method: Method, settings: &EstimatorSettings, seed: u64) -> RunRecord {
    let start = Instant::now();
    let cfg = &problem.config;
    let mut record = RunRecord {
        method,
        family: cfg.family,
        n: cfg.n,
        mass: (cfg.family == Family::Schwinger).then_some(cfg.mass),
        beta: (cfg.family != Family::Laplace2d).then_some(cfg.beta),
        dist: settings.dist,
        epsilon: settings.epsilon,
        seed,
        samples_per_level: Vec::new(),
        n_defl: None,
        work_total: 0,
        work_eigensolver: 0,
        estimate: None,
        exact: None,
        rel_error: None,
        status: "ok".into(),
        cost: None,
        wall_time_s: None,
    };
    let exact = problem.exact_trace();
    let outcome = match method {
        Method::Exact => match &exact {
            Ok(Some(x)) => {
                record.estimate = Some(crate::C64::new(*x, 0.0));
                Ok(None)
            }
            Ok(None) => Err(TraceError::TooLarge {
                n: problem.operator.nrows(),
                limit: SPECTRAL_SIZE_LIMIT,
                hint: "; no analytic formula for this family",
            }),
            Err(e) => Err(TraceError::InvalidArgument(e.to_string())),
        },
        Method::Plain => {
            let sampler = InverseSampler {
                solver: &problem.solver,
                level: 0,
                dim: problem.operator.nrows(),
            };
            hutchinson(&sampler, settings.dist, &settings.rule(false), seed).map(Some)
        }
        Method::Deflated => {
            let k = settings.n_defl.or_else(|| problem.default_n_defl());
            record.n_defl = k;
            match k {
                None => Err(TraceError::InvalidArgument(format!(
                    "no deflation size tabulated for {} N={}; pass n_defl",
                    cfg.family, cfg.n
                ))),
                Some(k) => problem.deflation_basis(k, &settings.eigen).and_then(|entry| {
                    record.work_eigensolver = entry.1.total();
                    deflated_hutchinson(&problem.solver, &entry.0, settings.dist, &settings.rule(false), seed).map(Some)
                }),
            }
        }
        Method::Mlmc => mlmc_trace(
            &problem.hierarchy,
            problem.mlmc_levels,
            &problem.solver,
            settings.dist,
            &settings.rule(true),
            seed,
        )
        .map(Some),
    };
    let fill = |record: &mut RunRecord, r: &EstimateResult| {
        record.samples_per_level = r.samples_per_level();
        record.work_total = r.work();
        record.estimate = Some(r.mean);
        record.cost = Some(r.cost.clone());
    };
    match outcome {
        Ok(Some(r)) => fill(&mut record, &r),
        Ok(None) => {}
        Err(TraceError::BudgetExhausted { partial, budget, level }) => {
            fill(&mut record, &partial);
            record.status = format!("error: {}", TraceError::BudgetExhausted { partial, budget, level });
        }
        Err(e) => record.status = format!("error: {e}"),
    }
    record = record.with_exact(exact.ok().flatten());
    record.wall_time_s = Some(start.elapsed().as_secs_f64());
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_depth_defaults() {
        for (n, solver, mlmc) in [(63, 4, 3), (127, 5, 4), (255, 6, 5), (511, 7, 6), (31, 3, 2), (15, 2, 2)] {
            assert_eq!(ProblemConfig::laplace(n).depths().unwrap(), (solver, mlmc), "N={n}");
        }
        let mut c = ProblemConfig::laplace(15);
        c.mlmc_levels = Some(3);
        assert_eq!(c.depths().unwrap(), (3, 3));
    }

    #[test]
    fn aggregation_depth_defaults() {
        assert_eq!(ProblemConfig::gauge(64, 0.009, 0).depths().unwrap(), (5, 5));
        assert_eq!(ProblemConfig::gauge(16, 0.009, 0).depths().unwrap(), (3, 3));
        assert_eq!(ProblemConfig::schwinger(128, -0.1, 0.009, 0).depths().unwrap(), (4, 4));
        assert_eq!(ProblemConfig::schwinger(16, -0.1, 0.009, 0).depths().unwrap(), (2, 2));
    }

    #[test]
    fn exact_cell_on_small_laplace() {
        let p = Problem::build(ProblemConfig::laplace(15)).unwrap();
        let r = run_cell(&p, Method::Exact, &EstimatorSettings::default(), 0);
        assert!(r.is_ok());
        assert!(r.samples_per_level.is_empty());
        assert_eq!(r.rel_error, Some(0.0));
    }

    #[test]
    fn schwinger_refuses_deflation() {
        let p = Problem::build(ProblemConfig::schwinger(8, 0.1, 0.0, 1)).unwrap();
        let settings = EstimatorSettings {
            n_defl: Some(4),
            ..EstimatorSettings::default()
        };
        let r = run_cell(&p, Method::Deflated, &settings, 0);
        assert!(r.status.starts_with("error:"), "{}", r.status);
    }

    #[test]
    fn missing_deflation_size_is_an_error_row() {
        let p = Problem::build(ProblemConfig::laplace(15)).unwrap();
        let r = run_cell(&p, Method::Deflated, &EstimatorSettings::default(), 0);
        assert!(r.status.contains("n_defl"));
    }
}
