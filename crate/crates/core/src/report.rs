//! Run records, the CSV result schema, cost-vs-ε fits and method ratios.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::estimators::Distribution;
use crate::generators::Family;
use crate::sparse::{CostLedger, C64};
use crate::{Result, TraceError};

/// Per-level sample-count columns in the CSV; unused ones stay empty.
pub const LEVEL_COLUMNS: usize = 8;

/// Largest ε used in scaling fits; coarser tolerances sit on the
/// minimum-sample plateau.
pub const FIT_EPS_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Plain,
    Deflated,
    Mlmc,
    Exact,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Plain, Method::Deflated, Method::Mlmc, Method::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Method::Plain => "plain",
            Method::Deflated => "deflated",
            Method::Mlmc => "mlmc",
            Method::Exact => "exact",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown method '{s}' (expected plain, deflated, mlmc or exact)"))
    }
}

/// One (method, seed) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub family: Family,
    #[serde(rename = "N")]
    pub n: usize,
    pub mass: Option<f64>,
    pub beta: Option<f64>,
    pub dist: Distribution,
    pub epsilon: f64,
    pub seed: u64,
    pub samples_per_level: Vec<usize>,
    pub n_defl: Option<usize>,
    /// Estimation work, excluding the eigensolver.
    pub work_total: u64,
    pub work_eigensolver: u64,
    pub estimate: Option<C64>,
    pub exact: Option<f64>,
    pub rel_error: Option<f64>,
    /// `ok`, or the error that aborted the cell.
    pub status: String,
    /// Per-category breakdown of `work_total`; not part of the CSV.
    #[serde(default)]
    pub cost: Option<CostLedger>,
    /// Informational only; not part of the CSV.
    #[serde(default)]
    pub wall_time_s: Option<f64>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Fills `exact` and the matching relative error.
    pub fn with_exact(mut self, exact: Option<f64>) -> Self {
        self.exact = exact;
        self.rel_error = match (exact, self.estimate) {
            (Some(x), Some(e)) if x != 0.0 => Some((e - C64::new(x, 0.0)).norm() / x.abs()),
            _ => None,
        };
        self
    }

    fn same_problem(&self, other: &RunRecord) -> bool {
        self.family == other.family
            && self.n == other.n
            && self.mass == other.mass
            && self.beta == other.beta
    }

    fn to_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut row = vec![
            self.method.to_string(),
            self.family.to_string(),
            self.n.to_string(),
            opt(self.mass),
            opt(self.beta),
            self.dist.to_string(),
            self.epsilon.to_string(),
            self.seed.to_string(),
        ];
        for l in 0..LEVEL_COLUMNS {
            row.push(self.samples_per_level.get(l).map(|n| n.to_string()).unwrap_or_default());
        }
        row.extend([
            self.n_defl.map(|n| n.to_string()).unwrap_or_default(),
            self.work_total.to_string(),
            self.work_eigensolver.to_string(),
            opt(self.estimate.map(|e| e.re)),
            opt(self.estimate.map(|e| e.im)),
            opt(self.exact),
            opt(self.rel_error),
            self.status.clone(),
        ]);
        row
    }

    fn from_row(row: &csv::StringRecord, line: usize) -> Result<Self> {
        let field = |i: usize| row.get(i).unwrap_or("");
        let err = |col: &str, msg: String| TraceError::Parse {
            line,
            msg: format!("column {col}: {msg}"),
        };
        fn parse<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| format!("'{s}': {e}"))
        }
        fn opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                parse(s).map(Some)
            }
        }
        let header = csv_header();
        if row.len() != header.len() {
            return Err(TraceError::Parse {
                line,
                msg: format!("expected {} columns, found {}", header.len(), row.len()),
            });
        }
        let h = |i: usize| header[i].as_str();
        let mut samples_per_level = Vec::new();
        for l in 0..LEVEL_COLUMNS {
            if let Some(n) = opt::<usize>(field(8 + l)).map_err(|m| err(h(8 + l), m))? {
                samples_per_level.push(n);
            }
        }
        let b = 8 + LEVEL_COLUMNS;
        let re = opt::<f64>(field(b + 3)).map_err(|m| err(h(b + 3), m))?;
        let im = opt::<f64>(field(b + 4)).map_err(|m| err(h(b + 4), m))?;
        Ok(Self {
            method: parse(field(0)).map_err(|m| err(h(0), m))?,
            family: parse(field(1)).map_err(|m| err(h(1), m))?,
            n: parse(field(2)).map_err(|m| err(h(2), m))?,
            mass: opt(field(3)).map_err(|m| err(h(3), m))?,
            beta: opt(field(4)).map_err(|m| err(h(4), m))?,
            dist: parse(field(5)).map_err(|m| err(h(5), m))?,
            epsilon: parse(field(6)).map_err(|m| err(h(6), m))?,
            seed: parse(field(7)).map_err(|m| err(h(7), m))?,
            samples_per_level,
            n_defl: opt(field(b)).map_err(|m| err(h(b), m))?,
            work_total: parse(field(b + 1)).map_err(|m| err(h(b + 1), m))?,
            work_eigensolver: parse(field(b + 2)).map_err(|m| err(h(b + 2), m))?,
            estimate: match (re, im) {
                (Some(re), Some(im)) => Some(C64::new(re, im)),
                _ => None,
            },
            exact: opt(field(b + 5)).map_err(|m| err(h(b + 5), m))?,
            rel_error: opt(field(b + 6)).map_err(|m| err(h(b + 6), m))?,
            status: field(b + 7).to_string(),
            cost: None,
            wall_time_s: None,
        })
    }
}

/// Column names, in file order.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["method", "family", "N", "m", "beta", "dist", "epsilon", "seed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=LEVEL_COLUMNS).map(|l| format!("n_samples_level_{l}")));
    h.extend(
        [
            "n_defl",
            "work_total",
            "work_eigensolver",
            "estimate_re",
            "estimate_im",
            "exact",
            "rel_error",
            "status",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// Writes a header and the records to `out`.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.to_string()).collect();
    if header != csv_header() {
        return Err(TraceError::Parse {
            line: 1,
            msg: "header does not match the run-record schema".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        out.push(RunRecord::from_row(&row?, i + 2)?);
    }
    Ok(out)
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    read_csv(fs::File::open(path)?)
}

/// Appends records to the CSV at `path`, creating it with a header if
/// missing. The new file is written beside the old one and renamed over it,
/// so readers never see a partial file.
pub fn append_csv(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut all = if path.exists() { read_csv_file(path)? } else { Vec::new() };
    all.extend_from_slice(records);
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile_in(dir, path)?;
    write_csv(&all, &mut tmp.1)?;
    tmp.1.sync_all()?;
    fs::rename(&tmp.0, path)?;
    Ok(())
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<(std::path::PathBuf, fs::File)> {
    let stem = target.file_name().and_then(|s| s.to_str()).unwrap_or("records");
    for k in 0..1000u32 {
        let candidate = dir.join(format!(".{stem}.{}.{k}.tmp", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&candidate) {
            Ok(f) => return Ok((candidate, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(TraceError::InvalidArgument(format!("no free temporary name in {}", dir.display())))
}

/// Least-squares slope of `log(work)` against `log(1/ε)` over successful
/// records of one problem and method, using only `ε ≤ 1e-2`.
pub fn scaling_fit(records: &[RunRecord]) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| TraceError::InvalidArgument("no records to fit".into()))?;
    if records.iter().any(|r| !r.same_problem(first) || r.method != first.method) {
        return Err(TraceError::InvalidArgument(
            "scaling fits need records of one problem and one method".into(),
        ));
    }
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.is_ok() && r.epsilon <= FIT_EPS_MAX * (1.0 + 1e-12) && r.work_total > 0)
        .map(|r| ((1.0 / r.epsilon).ln(), (r.work_total as f64).ln()))
        .collect();
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 3 {
        return Err(TraceError::InvalidArgument(format!(
            "scaling fit needs at least 3 distinct epsilon values ≤ {FIT_EPS_MAX}, found {}",
            distinct.len()
        )));
    }
    Ok(least_squares_slope(&points))
}

pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `work(a) / work(b)` for two runs of the same problem at the same ε.
/// Eigensolver work is excluded from both.
pub fn compare_methods(a: &RunRecord, b: &RunRecord) -> Result<f64> {
    if !a.same_problem(b) || a.epsilon != b.epsilon {
        return Err(TraceError::InvalidArgument(format!(
            "cannot compare {} {} N={} ε={} with {} {} N={} ε={}",
            a.method, a.family, a.n, a.epsilon, b.method, b.family, b.n, b.epsilon
        )));
    }
    if b.work_total == 0 {
        return Err(TraceError::InvalidArgument("reference run has zero work".into()));
    }
    Ok(a.work_total as f64 / b.work_total as f64)
}
