//! Stochastic trace estimators: plain Hutchinson, Hutchinson with exact
//! eigen-deflation, and multilevel Monte Carlo over a multigrid hierarchy.
//!
//! Every sample draws its vector from its own counter-based stream keyed by
//! `(master seed, component, sample index)`, and samples are reduced in
//! index order, so results do not depend on the number of worker threads.

mod deflation;
mod distribution;
mod mlmc;
mod oracle;
mod sampling;

pub use deflation::{deflated_hutchinson, smallest_eigenpairs, DeflationBasis, EigenConfig};
pub use distribution::{draw_vector, sample_rng, Distribution};
pub use mlmc::{coarsest_direct_trace, level_difference_apply, mlmc_trace, LevelDifference, COARSEST_DENSE_CAP};
pub use oracle::{enumerate_variance, optimal_allocation, predicted_variance, Allocation};
pub use sampling::{
    estimate_tau, hutchinson, quadratic_sample, tau_from_pilot, ComponentStats, DirectTerm, EstimateResult,
    InverseSampler, StoppingRule, Tolerance, TraceSampler, PILOT_SAMPLES,
};
