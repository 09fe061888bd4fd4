//! Experiment driver: matrix generation, hierarchy dumps, exact traces and
//! estimator runs with CSV output.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mlmc_trace::estimators::Distribution;
use mlmc_trace::experiment::{exact_trace, run_cell, Problem};
use mlmc_trace::generators::Family;
use mlmc_trace::multigrid::write_hierarchy;
use mlmc_trace::report::{append_csv, read_csv_file, scaling_fit, Method, RunRecord};
use mlmc_trace::sparse::mtx;

use config::{parse_epsilon, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mlmc-trace", version, about = "Stochastic estimation of tr(A⁻¹)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the operator as Matrix Market plus a JSON sidecar.
    Generate(Overrides),
    /// Build the multigrid hierarchy and dump every level.
    Hierarchy(Overrides),
    /// Print tr(A⁻¹) from the analytic formula or a dense inverse.
    TraceExact(Overrides),
    /// Run one method for every seed.
    Estimate(Overrides),
    /// Run the grid methods × N × ε × n_defl × seeds.
    Sweep(Overrides),
    /// Scaling fits and work ratios from result CSVs.
    Report(ReportArgs),
}

/// Command-line values; each one replaces the config-file value.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    /// Lattice extents, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Schwinger mass.
    #[arg(long = "m", allow_negative_numbers = true)]
    mass: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    field_seed: Option<u64>,
    /// Levels used by the multilevel estimator.
    #[arg(long = "levels")]
    mlmc_levels: Option<usize>,
    #[arg(long)]
    solver_depth: Option<usize>,
    #[arg(long)]
    dist: Option<Distribution>,
    /// Relative tolerances, comma separated; `1e-2.5` means 10^-2.5.
    #[arg(long = "eps", value_delimiter = ',', value_parser = parse_epsilon)]
    epsilon: Vec<f64>,
    /// Absolute standard-error target instead of a relative tolerance.
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Error-budget shares per level difference, comma separated.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long = "n-defl", value_delimiter = ',')]
    n_defl: Vec<usize>,
    /// Master seeds, comma separated.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    max_samples: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(f) = self.family {
            c.family = f;
        }
        if !self.sizes.is_empty() {
            c.sizes = self.sizes.clone();
        }
        if let Some(m) = self.mass {
            c.mass = m;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(s) = self.field_seed {
            c.field_seed = s;
        }
        if self.mlmc_levels.is_some() {
            c.mlmc_levels = self.mlmc_levels;
        }
        if self.solver_depth.is_some() {
            c.solver_depth = self.solver_depth;
        }
        if let Some(d) = self.dist {
            c.dist = d;
        }
        if !self.epsilon.is_empty() {
            c.epsilon = self.epsilon.clone();
        }
        if self.abs_tol.is_some() {
            c.abs_tol = self.abs_tol;
        }
        if !self.weights.is_empty() {
            c.weights = Some(self.weights.clone());
        }
        if !self.n_defl.is_empty() {
            c.n_defl = self.n_defl.clone();
        }
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        if !self.methods.is_empty() {
            c.methods = self.methods.clone();
        }
        if let Some(m) = self.max_samples {
            c.max_samples = m;
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Result CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar {
    family: Family,
    #[serde(rename = "N")]
    n: usize,
    beta: Option<f64>,
    m: Option<f64>,
    seed: Option<u64>,
    nrows: usize,
    nnz: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    csv: &'a Path,
    wall_time_s: f64,
    records: &'a [RunRecord],
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when some cell failed.
fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Generate(o) => generate(&o.resolve()?),
        Command::Hierarchy(o) => hierarchy(&o.resolve()?),
        Command::TraceExact(o) => trace_exact(&o.resolve()?),
        Command::Estimate(o) => {
            let c = o.resolve()?;
            if c.methods.len() != 1 {
                bail!("estimate runs exactly one method, got {}", c.methods.len());
            }
            experiment(&c, "estimate")
        }
        Command::Sweep(o) => experiment(&o.resolve()?, "sweep"),
        Command::Report(r) => report(&r.inputs),
    }
}

fn generate(c: &ExperimentConfig) -> anyhow::Result<bool> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    for &n in &c.sizes {
        let problem = c.problem(n);
        let a = problem.operator()?;
        let stem = format!("{}_N{n}", c.family);
        let gauge = c.family != Family::Laplace2d;
        mtx::write_file(&a, dir.join(format!("{stem}.mtx")))?;
        let sidecar = Sidecar {
            family: c.family,
            n,
            beta: gauge.then_some(c.beta),
            m: (c.family == Family::Schwinger).then_some(c.mass),
            seed: gauge.then_some(c.field_seed),
            nrows: a.nrows(),
            nnz: a.nnz(),
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        println!("{}: n={} nnz={}", dir.join(format!("{stem}.mtx")).display(), a.nrows(), a.nnz());
    }
    Ok(true)
}

fn hierarchy(c: &ExperimentConfig) -> anyhow::Result<bool> {
    let base = c.out.clone().unwrap_or_else(|| PathBuf::from("hierarchy"));
    for &n in &c.sizes {
        let problem = Problem::build(c.problem(n))?;
        let dir = if c.sizes.len() == 1 { base.clone() } else { base.join(format!("N{n}")) };
        let manifest = write_hierarchy(&problem.hierarchy, &dir)?;
        println!("{} N={n}: {:?} hierarchy in {}", c.family, manifest.kind, dir.display());
        for lv in &manifest.levels {
            println!("  level {}: n={} nnz={}", lv.level + 1, lv.n, lv.nnz);
        }
    }
    Ok(true)
}

fn trace_exact(c: &ExperimentConfig) -> anyhow::Result<bool> {
    for &n in &c.sizes {
        let problem = c.problem(n);
        match exact_trace(&problem, &problem.operator()?)? {
            Some(t) if c.sizes.len() == 1 => println!("{t:.10}"),
            Some(t) => println!("N={n} {t:.10}"),
            None => bail!("no exact trace available for {} N={n}", c.family),
        }
    }
    Ok(true)
}

fn experiment(c: &ExperimentConfig, command: &'static str) -> anyhow::Result<bool> {
    let start = Instant::now();
    let csv = c.out.clone().unwrap_or_else(|| PathBuf::from("results.csv"));
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut records = Vec::new();
    for &n in &c.sizes {
        let problem = match Problem::build(c.problem(n)) {
            Ok(p) => p,
            Err(e) => bail!("building {} N={n}: {e}", c.family),
        };
        for &method in &c.methods {
            let deflation = if method == Method::Deflated { c.deflation_sizes() } else { vec![None] };
            for &eps in &c.epsilon {
                for &k in &deflation {
                    for &seed in &c.seeds {
                        let record = run_cell(&problem, method, &c.settings(eps, k), seed);
                        println!(
                            "{method} N={n} ε={eps:.3e} seed={seed}: estimate {} work {} samples {:?} [{}]",
                            record.estimate.map_or("-".into(), |e| format!("{:.8e}", e.re)),
                            record.work_total,
                            record.samples_per_level,
                            record.status
                        );
                        append_csv(&csv, std::slice::from_ref(&record))
                            .with_context(|| format!("appending to {}", csv.display()))?;
                        records.push(record);
                    }
                }
            }
        }
    }
    let manifest = Manifest {
        command,
        config: c,
        csv: &csv,
        wall_time_s: start.elapsed().as_secs_f64(),
        records: &records,
    };
    let json_path = csv.with_extension("json");
    let tmp = json_path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
    fs::rename(&tmp, &json_path)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", records.len());
    }
    Ok(failed == 0)
}

/// (family, N, m, beta, dist) as printable strings.
type ProblemKey = (String, usize, String, String, String);

fn problem_key(r: &RunRecord) -> ProblemKey {
    (r.family.to_string(), r.n, format!("{:?}", r.mass), format!("{:?}", r.beta), r.dist.to_string())
}

fn report(inputs: &[PathBuf]) -> anyhow::Result<bool> {
    let mut records = Vec::new();
    for path in inputs {
        records.extend(read_csv_file(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut groups: BTreeMap<(ProblemKey, &'static str), Vec<RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        groups.entry((problem_key(r), r.method.name())).or_default().push(r.clone());
    }

    println!("cost scaling (slope of log work against log 1/ε, ε ≤ 1e-2)");
    for ((key, method), rs) in &groups {
        let label = format!("{} N={} {} {method}", key.0, key.1, key.4);
        match scaling_fit(rs) {
            Ok(s) => println!("  {label}: {s:.3}"),
            Err(e) => println!("  {label}: n/a ({e})"),
        }
    }

    println!("mean work relative to mlmc");
    let mut means: BTreeMap<(ProblemKey, &'static str, u64), (f64, usize)> = BTreeMap::new();
    for ((key, method), rs) in &groups {
        for r in rs {
            let e = means.entry((key.clone(), *method, r.epsilon.to_bits())).or_default();
            e.0 += r.work_total as f64;
            e.1 += 1;
        }
    }
    for ((key, method, eps), (sum, count)) in &means {
        if *method == "mlmc" || *method == "exact" {
            continue;
        }
        if let Some((ref_sum, ref_count)) = means.get(&(key.clone(), "mlmc", *eps)) {
            let ratio = (sum / *count as f64) / (ref_sum / *ref_count as f64);
            println!(
                "  {} N={} ε={:.3e} {method}/mlmc: {ratio:.2}",
                key.0,
                key.1,
                f64::from_bits(*eps)
            );
        }
    }
    let failed = records.len() - records.iter().filter(|r| r.is_ok()).count();
    if failed > 0 {
        println!("{failed} failed cells ignored");
    }
    Ok(true)
}
