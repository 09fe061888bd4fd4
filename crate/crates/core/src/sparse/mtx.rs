//! Matrix Market coordinate format.
//!
//! Writing always produces `matrix coordinate complex general`. Reading
//! accepts `real`, `integer`, `complex` and `pattern` fields with `general`,
//! `symmetric`, `skew-symmetric` or `hermitian` symmetry.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SparseMatrix, C64};
use crate::{Result, TraceError};

pub fn write<W: Write>(a: &SparseMatrix, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write(a, File::create(path)?)
}

pub fn read_file(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    read(File::open(path)?)
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Complex,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

pub fn read<R: Read>(input: R) -> Result<SparseMatrix> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, msg: &str| TraceError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };

    let (lno, banner) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    let banner = banner?;
    let tokens: Vec<String> = banner.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(lno, "missing %%MatrixMarket matrix banner"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(lno, "only coordinate format is supported"));
    }
    let field = match tokens[3].as_str() {
        "real" | "integer" | "double" => Field::Real,
        "complex" => Field::Complex,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(lno, &format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        "hermitian" => Symmetry::Hermitian,
        other => return Err(parse_err(lno, &format!("unsupported symmetry '{other}'"))),
    };

    let mut header = None;
    let mut triplets = Vec::new();
    let mut declared = 0usize;
    let mut seen = 0usize;
    for (lno, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        let Some((nrows, ncols)) = header else {
            if parts.len() != 3 {
                return Err(parse_err(lno, "size line must hold nrows ncols nnz"));
            }
            let nums: Vec<usize> = parts
                .iter()
                .map(|p| p.parse().map_err(|_| parse_err(lno, "bad size entry")))
                .collect::<Result<_>>()?;
            header = Some((nums[0], nums[1]));
            declared = nums[2];
            triplets.reserve(declared);
            continue;
        };
        let want = match field {
            Field::Pattern => 2,
            Field::Real => 3,
            Field::Complex => 4,
        };
        if parts.len() != want {
            return Err(parse_err(lno, &format!("expected {want} fields")));
        }
        let idx = |k: usize| -> Result<usize> {
            let v: usize = parts[k].parse().map_err(|_| parse_err(lno, "bad index"))?;
            if v == 0 {
                return Err(parse_err(lno, "indices are 1-based"));
            }
            Ok(v - 1)
        };
        let num = |k: usize| -> Result<f64> { parts[k].parse().map_err(|_| parse_err(lno, "bad value")) };
        let (i, j) = (idx(0)?, idx(1)?);
        if i >= nrows || j >= ncols {
            return Err(parse_err(lno, "index outside declared dimensions"));
        }
        let v = match field {
            Field::Pattern => C64::new(1.0, 0.0),
            Field::Real => C64::new(num(2)?, 0.0),
            Field::Complex => C64::new(num(2)?, num(3)?),
        };
        triplets.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => triplets.push((j, i, v)),
                Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
                Symmetry::Hermitian => triplets.push((j, i, v.conj())),
            }
        }
        seen += 1;
    }
    let (nrows, ncols) = header.ok_or_else(|| parse_err(0, "missing size line"))?;
    if seen != declared {
        return Err(TraceError::Parse {
            line: 0,
            msg: format!("header declares {declared} entries, found {seen}"),
        });
    }
    SparseMatrix::from_triplets(nrows, ncols, triplets)
}
