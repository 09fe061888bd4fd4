use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Deserializer, Serialize};

use mlmc_trace::estimators::{Distribution, EigenConfig};
use mlmc_trace::experiment::{EstimatorSettings, ProblemConfig};
use mlmc_trace::generators::Family;
use mlmc_trace::multigrid::AggregationConfig;
use mlmc_trace::report::Method;
use mlmc_trace::solvers::SolveConfig;

/// Experiment description read from a JSON file. List-valued fields also
/// accept a single value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub family: Family,
    #[serde(rename = "N", deserialize_with = "one_or_many")]
    pub sizes: Vec<usize>,
    #[serde(rename = "m")]
    pub mass: f64,
    pub beta: f64,
    pub field_seed: u64,
    #[serde(rename = "L")]
    pub mlmc_levels: Option<usize>,
    pub solver_depth: Option<usize>,
    pub solver: Option<SolveConfig>,
    pub aggregation: Option<AggregationConfig>,
    pub dist: Distribution,
    #[serde(deserialize_with = "one_or_many")]
    pub epsilon: Vec<f64>,
    pub abs_tol: Option<f64>,
    pub weights: Option<Vec<f64>>,
    /// Deflation sizes; empty means the tabulated default for each N.
    #[serde(deserialize_with = "one_or_many")]
    pub n_defl: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub seeds: Vec<u64>,
    #[serde(rename = "methods", deserialize_with = "one_or_many")]
    pub methods: Vec<Method>,
    pub max_samples: usize,
    pub eigen: EigenConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let problem = ProblemConfig::default();
        let settings = EstimatorSettings::default();
        Self {
            family: problem.family,
            sizes: vec![problem.n],
            mass: problem.mass,
            beta: problem.beta,
            field_seed: problem.field_seed,
            mlmc_levels: None,
            solver_depth: None,
            solver: None,
            aggregation: None,
            dist: settings.dist,
            epsilon: vec![settings.epsilon],
            abs_tol: None,
            weights: None,
            n_defl: Vec::new(),
            seeds: vec![0],
            methods: vec![Method::Mlmc],
            max_samples: settings.max_samples,
            eigen: settings.eigen,
            out: None,
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.sizes.is_empty(), "N must list at least one lattice size");
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        ensure!(!self.methods.is_empty(), "methods must not be empty");
        ensure!(!self.epsilon.is_empty(), "epsilon must not be empty");
        for &eps in &self.epsilon {
            ensure!(eps > 0.0 && eps.is_finite(), "epsilon must be positive, got {eps}");
        }
        if let Some(t) = self.abs_tol {
            ensure!(t > 0.0 && t.is_finite(), "abs_tol must be positive, got {t}");
        }
        if let Some(w) = &self.weights {
            ensure!(w.iter().all(|&x| x > 0.0), "weights must be positive, got {w:?}");
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                bail!("weights must sum to 1, got {sum}");
            }
        }
        ensure!(self.max_samples >= 5, "max_samples must allow the 5 pilot samples");
        Ok(())
    }

    pub fn problem(&self, n: usize) -> ProblemConfig {
        ProblemConfig {
            family: self.family,
            n,
            mass: self.mass,
            beta: self.beta,
            field_seed: self.field_seed,
            mlmc_levels: self.mlmc_levels,
            solver_depth: self.solver_depth,
            solver: self.solver,
            aggregation: self.aggregation.clone(),
        }
    }

    pub fn settings(&self, epsilon: f64, n_defl: Option<usize>) -> EstimatorSettings {
        EstimatorSettings {
            dist: self.dist,
            epsilon,
            abs_tol: self.abs_tol,
            weights: self.weights.clone(),
            n_defl,
            max_samples: self.max_samples,
            eigen: self.eigen,
        }
    }

    /// Deflation sizes to sweep; a single `None` when none are given.
    pub fn deflation_sizes(&self) -> Vec<Option<usize>> {
        if self.n_defl.is_empty() {
            vec![None]
        } else {
            self.n_defl.iter().copied().map(Some).collect()
        }
    }
}

/// Parses a tolerance, accepting fractional decimal exponents such as
/// `1e-1.5` for `10^-1.5`.
pub fn parse_epsilon(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.parse::<f64>() {
        Ok(v) => v,
        Err(_) => {
            let (mantissa, exponent) = s
                .split_once(['e', 'E'])
                .ok_or_else(|| format!("invalid tolerance '{s}'"))?;
            let m: f64 = mantissa.parse().map_err(|_| format!("invalid tolerance '{s}'"))?;
            let e: f64 = exponent.parse().map_err(|_| format!("invalid tolerance '{s}'"))?;
            m * 10f64.powf(e)
        }
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(format!("tolerance must be positive, got '{s}'"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_exponents() {
        assert_eq!(parse_epsilon("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_epsilon("1e-2.5").unwrap(), 10f64.powf(-2.5));
        assert_eq!(parse_epsilon("2E-1.5").unwrap(), 2.0 * 10f64.powf(-1.5));
        assert!(parse_epsilon("0").is_err());
        assert!(parse_epsilon("1e-x").is_err());
    }

    #[test]
    fn scalars_and_lists() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"family":"schwinger","N":[16,32],"m":-0.1,"epsilon":1e-2,"methods":["plain","mlmc"]}"#)
                .unwrap();
        assert_eq!(c.sizes, vec![16, 32]);
        assert_eq!(c.epsilon, vec![1e-2]);
        assert_eq!(c.methods, vec![Method::Plain, Method::Mlmc]);
        assert_eq!(c.seeds, vec![0]);
        c.validate().unwrap();
    }

    #[test]
    fn schema_is_strict() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"eps":1e-3}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"weights":[0.4,0.55,0.1]}"#).unwrap();
        assert!(c.validate().is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"weights":[0.4,0.55,0.05]}"#).unwrap();
        c.validate().unwrap();
    }
}
