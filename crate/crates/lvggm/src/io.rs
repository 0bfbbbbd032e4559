//! Text formats shared by the library and the command-line tools.
//!
//! Matrices and data samples travel as plain CSV: one row per line,
//! comma-separated decimal floats, no header. JSON and JSONL outputs are
//! serialized with serde.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sym::SymMatrix;

/// Parse a rectangular CSV of floats. Blank lines are skipped; every
/// remaining row must have the same number of columns.
pub fn read_dense_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("cannot parse {:?} as a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteData {
                    row: rows.len(),
                    col: row.len(),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {} columns, expected {w}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    let ncols = width.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "file contains no data rows".into(),
    })?;
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Read a square symmetric matrix (tolerance 1e-8 on asymmetry).
pub fn read_matrix_csv(path: &Path) -> Result<SymMatrix> {
    SymMatrix::from_dense_checked(read_dense_csv(path)?, 1e-8)
}

pub fn write_dense_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", m[(i, j)])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &SymMatrix) -> Result<()> {
    write_dense_csv(path, m.as_dmatrix())
}

/// Append-free JSONL writer: one compact JSON object per record line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    writeln!(w, "{body}")?;
    w.flush()?;
    Ok(())
}
