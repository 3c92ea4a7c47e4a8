//! Matrix Market coordinate files and plain-text vectors.

use std::io::{BufRead, Write};

use super::CsrMatrix;
use crate::error::{Error, Result};

const BANNER: &str = "%%MatrixMarket matrix coordinate real general";

/// Writes `A` in Matrix Market coordinate format with 1-based indices.
/// Values use the shortest representation that round-trips exactly.
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{BANNER}")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        for (c, v) in a.row(i).iter() {
            writeln!(w, "{} {} {:?}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
    let mut lines = r.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let banner = banner?;
    let lower = banner.to_ascii_lowercase();
    let fields: Vec<&str> = lower.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket banner"));
    }
    if fields[2] != "coordinate" || fields[3] != "real" || fields[4] != "general" {
        return Err(parse_err(
            1,
            format!("unsupported format '{} {} {}'", fields[2], fields[3], fields[4]),
        ));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let lineno = lineno + 1;
        let parts: Vec<&str> = t.split_whitespace().collect();
        match dims {
            None => {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols nnz'"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()));
                let d = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
                entries.reserve(d.2);
                dims = Some(d);
            }
            Some((m, n, _)) => {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected 'row col value'"));
                }
                let i: usize = parts[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = parts[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = parts[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) out of range")));
                }
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (m, n, nnz) = dims.ok_or_else(|| parse_err(2, "missing size line"))?;
    if entries.len() != nnz {
        return Err(parse_err(
            0,
            format!("header declares {nnz} entries, found {}", entries.len()),
        ));
    }
    CsrMatrix::from_triplets(&entries, m, n)
}

/// One value per line.
pub fn write_vector<W: Write>(v: &[f64], mut w: W) -> Result<()> {
    for x in v {
        writeln!(w, "{x:?}")?;
    }
    Ok(())
}

/// Whitespace-delimited values; blank lines and `%`/`#` comments skipped.
pub fn read_vector<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        for tok in t.split_whitespace() {
            out.push(
                tok.parse()
                    .map_err(|_| parse_err(lineno + 1, format!("bad value '{tok}'")))?,
            );
        }
    }
    Ok(out)
}
