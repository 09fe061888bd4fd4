use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::solvers::LevelSolver;
use crate::sparse::vector::dot;
use crate::sparse::{CostLedger, SparseMatrix, C64};
use crate::{Result, TraceError};

use super::distribution::{draw_vector, sample_rng, Distribution};

/// Samples drawn before any stopping decision; they also fix `τ`.
pub const PILOT_SAMPLES: usize = 5;

/// A stochastic quantity `x* B x` whose expectation is `tr(B)`.
pub trait TraceSampler: Sync {
    /// Length of the sample vectors.
    fn dim(&self) -> usize;

    fn sample(&self, x: &[C64], ledger: &mut CostLedger) -> Result<C64>;
}

/// `x* (op x)` for a single operator application.
pub fn quadratic_sample<F>(apply: F, x: &[C64], ledger: &mut CostLedger) -> Result<C64>
where
    F: FnOnce(&[C64], &mut CostLedger) -> Result<Vec<C64>>,
{
    let y = apply(x, ledger)?;
    if y.len() != x.len() {
        return Err(TraceError::DimensionMismatch {
            op: "quadratic sample",
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(dot(x, &y))
}

impl TraceSampler for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn sample(&self, x: &[C64], ledger: &mut CostLedger) -> Result<C64> {
        quadratic_sample(|v, l| self.spmv(v, l), x, ledger)
    }
}

/// `x* A_ℓ⁻¹ x` through a level solver.
pub struct InverseSampler<'a> {
    pub solver: &'a dyn LevelSolver,
    pub level: usize,
    pub dim: usize,
}

impl TraceSampler for InverseSampler<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, x: &[C64], ledger: &mut CostLedger) -> Result<C64> {
        quadratic_sample(|v, l| self.solver.solve(self.level, v, l), x, ledger)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// Relative accuracy `ε`; the absolute target becomes `ε·τ`.
    Relative(f64),
    /// Absolute target for the total standard error.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub tolerance: Tolerance,
    /// Shares `w_ℓ` of the squared error budget per stochastic component;
    /// equal shares when absent.
    pub weights: Option<Vec<f64>>,
    pub min_samples: usize,
    /// Per-component cap on the number of samples.
    pub max_samples: usize,
    /// Samples evaluated concurrently between stopping checks.
    pub batch_size: usize,
}

impl StoppingRule {
    pub fn relative(epsilon: f64) -> Self {
        Self {
            tolerance: Tolerance::Relative(epsilon),
            weights: None,
            min_samples: PILOT_SAMPLES,
            max_samples: 1_000_000,
            batch_size: 8,
        }
    }

    pub fn absolute(target: f64) -> Self {
        Self {
            tolerance: Tolerance::Absolute(target),
            ..Self::relative(1.0)
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_max_samples(mut self, max_samples: usize) -> Self {
        self.max_samples = max_samples;
        self
    }

    pub fn needs_tau(&self) -> bool {
        matches!(self.tolerance, Tolerance::Relative(_))
    }

    /// Per-component standard-error targets `ρ_ℓ = √w_ℓ · ε · τ`.
    pub fn targets(&self, tau: Option<f64>, components: usize) -> Result<Vec<f64>> {
        let total = match self.tolerance {
            Tolerance::Relative(eps) => {
                if !(eps > 0.0) {
                    return Err(TraceError::InvalidArgument(format!("epsilon must be positive, got {eps}")));
                }
                let tau = tau.ok_or_else(|| TraceError::InvalidArgument("relative tolerance needs tau".into()))?;
                eps * tau
            }
            Tolerance::Absolute(t) => {
                if !(t > 0.0) {
                    return Err(TraceError::InvalidArgument(format!("absolute tolerance must be positive, got {t}")));
                }
                t
            }
        };
        let weights = match &self.weights {
            Some(w) => {
                validate_weights(w, components)?;
                w.clone()
            }
            None => vec![1.0 / components.max(1) as f64; components],
        };
        Ok(weights.iter().map(|w| w.sqrt() * total).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_samples < PILOT_SAMPLES {
            return Err(TraceError::InvalidArgument(format!(
                "batch size must be positive and the sample cap at least {PILOT_SAMPLES}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_weights(w: &[f64], components: usize) -> Result<()> {
    if w.len() != components {
        return Err(TraceError::InvalidArgument(format!(
            "expected {components} weights, got {}",
            w.len()
        )));
    }
    if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TraceError::InvalidArgument(format!(
            "weights must be non-negative and sum to 1, got {w:?}"
        )));
    }
    Ok(())
}

/// `|mean| − s` of the pilot values, with `s` the sample standard deviation.
pub fn tau_from_pilot(values: &[C64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(TraceError::InvalidArgument("tau needs at least two pilot values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<C64>() / n;
    let var = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    let tau = mean.norm() - var.sqrt();
    if tau > 0.0 {
        Ok(tau)
    } else {
        Err(TraceError::NonPositiveTau { tau })
    }
}

/// `τ` from [`PILOT_SAMPLES`] fresh samples of `sampler` on stream 0.
pub fn estimate_tau(sampler: &dyn TraceSampler, dist: Distribution, seed: u64) -> Result<f64> {
    let pilot = draw_samples(sampler, dist, seed, 0, 0..PILOT_SAMPLES as u64)?;
    tau_from_pilot(&pilot.iter().map(|p| p.0).collect::<Vec<_>>())
}

/// Sample statistics of one stochastic component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    /// 1-based level difference for multilevel runs, 0 otherwise.
    pub level: usize,
    pub n_samples: usize,
    pub mean: C64,
    pub sample_variance: f64,
    /// Standard-error target `ρ_ℓ`.
    pub target: f64,
    pub cost: CostLedger,
}

impl ComponentStats {
    pub fn std_error(&self) -> f64 {
        if self.n_samples < 2 {
            return f64::INFINITY;
        }
        (self.sample_variance / self.n_samples as f64).sqrt()
    }
}

/// A deterministic term added to the stochastic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectTerm {
    pub value: C64,
    pub cost: CostLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub mean: C64,
    /// Variance of one sample. For multilevel results this is the variance a
    /// single-level sample would need to give the same standard error with
    /// `n_samples` samples.
    pub sample_variance: f64,
    pub n_samples: usize,
    /// Everything charged by the estimate, including the direct term.
    pub cost: CostLedger,
    pub per_level: Vec<ComponentStats>,
    pub direct: Option<DirectTerm>,
    pub tau: Option<f64>,
}

impl EstimateResult {
    pub fn std_error(&self) -> f64 {
        self.per_level
            .iter()
            .map(|c| if c.n_samples < 2 { f64::INFINITY } else { c.sample_variance / c.n_samples as f64 })
            .sum::<f64>()
            .sqrt()
    }

    pub fn work(&self) -> u64 {
        self.cost.total()
    }

    pub fn samples_per_level(&self) -> Vec<usize> {
        self.per_level.iter().map(|c| c.n_samples).collect()
    }

    pub(crate) fn assemble(per_level: Vec<ComponentStats>, direct: Option<DirectTerm>, tau: Option<f64>) -> Self {
        let mut mean: C64 = per_level.iter().map(|c| c.mean).sum();
        let mut cost = CostLedger::new();
        for c in &per_level {
            cost.merge(&c.cost);
        }
        if let Some(d) = &direct {
            mean += d.value;
            cost.merge(&d.cost);
        }
        let n_samples: usize = per_level.iter().map(|c| c.n_samples).sum();
        let sample_variance = match per_level.as_slice() {
            [] => 0.0,
            [single] => single.sample_variance,
            many => {
                let se2: f64 = many.iter().map(|c| c.sample_variance / c.n_samples.max(1) as f64).sum();
                se2 * n_samples as f64
            }
        };
        Self {
            mean,
            sample_variance,
            n_samples,
            cost,
            per_level,
            direct,
            tau,
        }
    }
}

/// Running mean and variance in sample-index order.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    n: usize,
    mean: C64,
    m2: f64,
    cost: CostLedger,
}

impl Accumulator {
    fn push(&mut self, value: C64, cost: &CostLedger) {
        self.n += 1;
        let delta = value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += (delta.conj() * (value - self.mean)).re;
        self.cost.merge(cost);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    fn into_stats(self, level: usize, target: f64) -> ComponentStats {
        ComponentStats {
            level,
            n_samples: self.n,
            mean: self.mean,
            sample_variance: self.variance(),
            target,
            cost: self.cost,
        }
    }
}

/// Evaluates samples `indices` of `stream` concurrently, returned in index order.
pub(crate) fn draw_samples(
    sampler: &dyn TraceSampler,
    dist: Distribution,
    seed: u64,
    stream: u64,
    indices: std::ops::Range<u64>,
) -> Result<Vec<(C64, CostLedger)>> {
    indices
        .into_par_iter()
        .map(|k| {
            let x = draw_vector(sampler.dim(), dist, &mut sample_rng(seed, stream, k));
            let mut ledger = CostLedger::new();
            let v = sampler.sample(&x, &mut ledger)?;
            Ok((v, ledger))
        })
        .collect()
}

/// Outcome of sampling one component: either converged statistics or the
/// statistics gathered when the sample cap was hit.
pub(crate) enum ComponentOutcome {
    Converged(ComponentStats),
    Exhausted(ComponentStats),
}

/// Continues a component from its pilot samples until the standard error
/// is at most `target` with at least `min_samples` samples. The result is
/// the same as adding samples one at a time in index order; samples
/// evaluated beyond the stopping point of a batch are discarded uncharged.
pub(crate) fn run_component(
    sampler: &dyn TraceSampler,
    dist: Distribution,
    seed: u64,
    stream: u64,
    level: usize,
    target: f64,
    rule: &StoppingRule,
    pilot: Vec<(C64, CostLedger)>,
) -> Result<ComponentOutcome> {
    let mut acc = Accumulator::default();
    let done = |acc: &Accumulator| acc.n >= rule.min_samples && acc.std_error() <= target;
    for (v, c) in &pilot {
        acc.push(*v, c);
    }
    while !done(&acc) {
        if acc.n >= rule.max_samples {
            return Ok(ComponentOutcome::Exhausted(acc.into_stats(level, target)));
        }
        let start = acc.n as u64;
        let batch = rule.batch_size.min(rule.max_samples - acc.n) as u64;
        for (v, c) in draw_samples(sampler, dist, seed, stream, start..start + batch)? {
            acc.push(v, &c);
            if done(&acc) {
                break;
            }
        }
    }
    Ok(ComponentOutcome::Converged(acc.into_stats(level, target)))
}

/// Plain Hutchinson estimate of `tr(B)` for the sampled operator `B`.
pub fn hutchinson(sampler: &dyn TraceSampler, dist: Distribution, rule: &StoppingRule, seed: u64) -> Result<EstimateResult> {
    hutchinson_with_direct(sampler, dist, rule, seed, None)
}

pub(crate) fn hutchinson_with_direct(
    sampler: &dyn TraceSampler,
    dist: Distribution,
    rule: &StoppingRule,
    seed: u64,
    direct: Option<DirectTerm>,
) -> Result<EstimateResult> {
    rule.validate()?;
    let pilot = draw_samples(sampler, dist, seed, 0, 0..PILOT_SAMPLES as u64)?;
    let shift = direct.as_ref().map_or(C64::new(0.0, 0.0), |d| d.value);
    let tau = if rule.needs_tau() {
        Some(tau_from_pilot(&pilot.iter().map(|p| p.0 + shift).collect::<Vec<_>>())?)
    } else {
        None
    };
    let target = rule.targets(tau, 1)?[0];
    match run_component(sampler, dist, seed, 0, 0, target, rule, pilot)? {
        ComponentOutcome::Converged(stats) => Ok(EstimateResult::assemble(vec![stats], direct, tau)),
        ComponentOutcome::Exhausted(stats) => Err(TraceError::BudgetExhausted {
            budget: rule.max_samples,
            level: None,
            partial: Box::new(EstimateResult::assemble(vec![stats], direct, tau)),
        }),
    }
}
