use rayon::prelude::*;

use crate::multigrid::Hierarchy;
use crate::solvers::{dense_inverse_of, LevelSolver};
use crate::sparse::vector::dot;
use crate::sparse::{trace_product, CostCategory, CostLedger, C64};
use crate::{Result, TraceError};

use super::distribution::{draw_vector, sample_rng};
use super::sampling::{
    run_component, tau_from_pilot, ComponentOutcome, DirectTerm, EstimateResult, StoppingRule, TraceSampler,
    PILOT_SAMPLES,
};
use super::Distribution;

/// Largest coarsest level whose inverse is formed densely.
pub const COARSEST_DENSE_CAP: usize = 4096;

/// One stochastic sample of the level difference between levels `l` and
/// `l + 1` (0-based, so `l = 0` is the first difference).
///
/// Full form, `x ∈ Cⁿ`: `x* (P̂_l A_l⁻¹ R̂_l − P̂_{l+1} A_{l+1}⁻¹ R̂_{l+1}) x`.
/// Reduced form, `x ∈ C^{n_l}`: `x* (A_l⁻¹ − P_l A_{l+1}⁻¹ R_l) x`, valid in
/// expectation when `R̂_l P̂_l = I`.
pub fn level_difference_apply(
    h: &Hierarchy,
    l: usize,
    x: &[C64],
    solver: &dyn LevelSolver,
    reduced: bool,
    ledger: &mut CostLedger,
) -> Result<C64> {
    if l + 1 >= h.num_levels() {
        return Err(TraceError::InvalidArgument(format!(
            "level difference {l} needs levels {l} and {}, hierarchy has {}",
            l + 1,
            h.num_levels()
        )));
    }
    let expected = if reduced { h.size(l) } else { h.size(0) };
    if x.len() != expected {
        return Err(TraceError::DimensionMismatch {
            op: "level difference",
            expected,
            got: x.len(),
        });
    }
    let level = h.level(l);
    let (p, r) = (level.p.as_ref().unwrap(), level.r.as_ref().unwrap());
    let z_fine = if reduced || l == 0 {
        x.to_vec()
    } else {
        h.restrict_acc(l).apply(x, ledger, CostCategory::Transfer)?
    };
    let z_coarse = r.apply(&z_fine, ledger, CostCategory::Transfer)?;
    let y_fine = solver.solve(l, &z_fine, ledger)?;
    let y_coarse = solver.solve(l + 1, &z_coarse, ledger)?;
    let mut w = p.apply(&y_coarse, ledger, CostCategory::Transfer)?;
    for (wi, yi) in w.iter_mut().zip(&y_fine) {
        *wi = yi - *wi;
    }
    if reduced || l == 0 {
        Ok(dot(x, &w))
    } else {
        let back = h.prolong_acc(l).apply(&w, ledger, CostCategory::Transfer)?;
        Ok(dot(x, &back))
    }
}

/// `tr(P̂_c A_c⁻¹ R̂_c)` for the level `c`, computed as `tr(A_c⁻¹ · R̂_c P̂_c)`
/// from a dense inverse. Orthonormal hierarchies skip the product since
/// `R̂_c P̂_c = I`.
pub fn coarsest_direct_trace(h: &Hierarchy, c: usize, ledger: &mut CostLedger) -> Result<C64> {
    if c >= h.num_levels() {
        return Err(TraceError::InvalidArgument(format!(
            "level {c} outside a hierarchy of {} levels",
            h.num_levels()
        )));
    }
    let a = h.operator(c);
    if a.nrows() > COARSEST_DENSE_CAP {
        return Err(TraceError::TooLarge {
            n: a.nrows(),
            limit: COARSEST_DENSE_CAP,
            hint: "; use more levels so the coarsest operator is smaller",
        });
    }
    let inv = dense_inverse_of(a, ledger)?;
    if c == 0 || h.is_orthonormal() {
        return Ok(inv.trace());
    }
    let rp = h.restrict_acc(c).matmul(h.prolong_acc(c), ledger)?;
    trace_product(&inv, &rp, ledger)
}

/// A level difference as a trace sampler.
pub struct LevelDifference<'a> {
    pub hierarchy: &'a Hierarchy,
    pub solver: &'a dyn LevelSolver,
    pub level: usize,
    pub reduced: bool,
}

impl TraceSampler for LevelDifference<'_> {
    fn dim(&self) -> usize {
        if self.reduced {
            self.hierarchy.size(self.level)
        } else {
            self.hierarchy.size(0)
        }
    }

    fn sample(&self, x: &[C64], ledger: &mut CostLedger) -> Result<C64> {
        level_difference_apply(self.hierarchy, self.level, x, self.solver, self.reduced, ledger)
    }
}

/// Multilevel Monte-Carlo estimate of `tr(A_0⁻¹)` over the first
/// `num_levels` levels of `h`. Each level difference is sampled until its
/// standard error reaches `ρ_ℓ`; the coarsest term is computed directly.
///
/// The pilot draws [`PILOT_SAMPLES`] samples of every difference; their sums
/// plus the coarsest trace fix `τ`, and they remain the first samples of
/// each difference. Level difference `ℓ` (1-based) uses sample stream `ℓ`.
pub fn mlmc_trace(
    h: &Hierarchy,
    num_levels: usize,
    solver: &dyn LevelSolver,
    dist: Distribution,
    rule: &StoppingRule,
    seed: u64,
) -> Result<EstimateResult> {
    if num_levels == 0 || num_levels > h.num_levels() {
        return Err(TraceError::InvalidArgument(format!(
            "cannot use {num_levels} levels of a hierarchy with {}",
            h.num_levels()
        )));
    }
    let coarsest = num_levels - 1;
    let mut direct_cost = CostLedger::new();
    let direct_value = coarsest_direct_trace(h, coarsest, &mut direct_cost)?;
    let direct = DirectTerm {
        value: direct_value,
        cost: direct_cost,
    };
    if coarsest == 0 {
        return Ok(EstimateResult::assemble(Vec::new(), Some(direct), None));
    }
    let reduced = h.is_orthonormal();
    let samplers: Vec<LevelDifference> = (0..coarsest)
        .map(|level| LevelDifference {
            hierarchy: h,
            solver,
            level,
            reduced,
        })
        .collect();

    let pilot_jobs: Vec<(usize, u64)> = (0..coarsest)
        .flat_map(|l| (0..PILOT_SAMPLES as u64).map(move |k| (l, k)))
        .collect();
    let pilot_flat: Vec<(C64, CostLedger)> = pilot_jobs
        .par_iter()
        .map(|&(l, k)| {
            let s = &samplers[l];
            let x = draw_vector(s.dim(), dist, &mut sample_rng(seed, (l + 1) as u64, k));
            let mut ledger = CostLedger::new();
            s.sample(&x, &mut ledger).map(|v| (v, ledger))
        })
        .collect::<Result<_>>()?;
    let mut pilots: Vec<Vec<(C64, CostLedger)>> = vec![Vec::new(); coarsest];
    for ((l, _), p) in pilot_jobs.iter().zip(pilot_flat) {
        pilots[*l].push(p);
    }

    let tau = if rule.needs_tau() {
        let totals: Vec<C64> = (0..PILOT_SAMPLES)
            .map(|k| pilots.iter().map(|p| p[k].0).sum::<C64>() + direct_value)
            .collect();
        Some(tau_from_pilot(&totals)?)
    } else {
        None
    };
    let targets = rule.targets(tau, coarsest)?;

    let mut per_level = Vec::with_capacity(coarsest);
    let mut exhausted = None;
    for (l, pilot) in pilots.into_iter().enumerate() {
        let outcome = run_component(&samplers[l], dist, seed, (l + 1) as u64, l + 1, targets[l], rule, pilot)?;
        match outcome {
            ComponentOutcome::Converged(stats) => per_level.push(stats),
            ComponentOutcome::Exhausted(stats) => {
                per_level.push(stats);
                exhausted.get_or_insert(l + 1);
            }
        }
    }
    let result = EstimateResult::assemble(per_level, Some(direct), tau);
    match exhausted {
        None => Ok(result),
        Some(level) => Err(TraceError::BudgetExhausted {
            budget: rule.max_samples,
            level: Some(level),
            partial: Box::new(result),
        }),
    }
}
