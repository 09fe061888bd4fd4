use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::sparse::C64;

/// Component distribution of Hutchinson sample vectors. Every choice has
/// `E[x_i] = 0` and `E[x̄_i x_j] = δ_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// `±1` with probability ½ each.
    Rademacher,
    /// `{1, −1, i, −i}` with probability ¼ each.
    Z4,
    /// `e^{iθ}` with `θ` uniform in `[0, 2π)`.
    UniformPhase,
    /// Real standard normal.
    Gaussian,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Rademacher,
        Distribution::Z4,
        Distribution::UniformPhase,
        Distribution::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Rademacher => "rademacher",
            Distribution::Z4 => "z4",
            Distribution::UniformPhase => "uniform-phase",
            Distribution::Gaussian => "gaussian",
        }
    }

    /// One component drawn from the distribution.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> C64 {
        match self {
            Distribution::Rademacher => C64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
            Distribution::Z4 => match rng.random_range(0..4u8) {
                0 => C64::new(1.0, 0.0),
                1 => C64::new(-1.0, 0.0),
                2 => C64::new(0.0, 1.0),
                _ => C64::new(0.0, -1.0),
            },
            Distribution::UniformPhase => C64::from_polar(1.0, TAU * rng.random::<f64>()),
            Distribution::Gaussian => C64::new(rng.sample(StandardNormal), 0.0),
        }
    }
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Distribution::ALL
            .into_iter()
            .find(|d| d.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown distribution '{s}' (expected rademacher, z4, uniform-phase or gaussian)"))
    }
}

/// A vector of `n` i.i.d. components.
pub fn draw_vector<R: Rng + ?Sized>(n: usize, dist: Distribution, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// The generator for sample `index` of stochastic component `stream`. Each
/// sample owns its stream, so results do not depend on evaluation order.
pub fn sample_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((stream << 40) | index);
    rng
}
