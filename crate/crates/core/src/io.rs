//! Dataset and stream file handling plus atomic CSV emission.
//!
//! Matrices load from numeric CSV (one row per line) or from a little-endian
//! binary file with an 8-byte header (`n`, `d` as 32-bit each) followed by
//! row-major float64 values. Update streams are JSON lines, one object per
//! round. All emitted files are written to a temporary sibling and renamed
//! into place, so a crash never leaves a partial file behind.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{ensure_finite, Error, Result};
use crate::regression::SparseUpdate;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Loads a matrix, dispatching on the extension: `.csv`/`.txt` parse as
/// text, anything else as the binary format.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => load_matrix_csv(path),
        _ => load_matrix_bin(path),
    }
}

pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    ),
                ));
            }
        }
        ensure_finite(&row, "matrix row")?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no rows"));
    }
    let (n, d) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

pub fn load_matrix_bin(path: &Path) -> Result<DMatrix<f64>> {
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut header = [0u8; 8];
    file.read_exact(&mut header).map_err(|e| io_err(path, e))?;
    let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(parse_err(path, "zero dimension in header"));
    }
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| io_err(path, e))?;
    if buf.len() != n * d * 8 {
        return Err(parse_err(
            path,
            format!("expected {} payload bytes, found {}", n * d * 8, buf.len()),
        ));
    }
    let mut values = Vec::with_capacity(n * d);
    for chunk in buf.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    ensure_finite(&values, "binary matrix payload")?;
    Ok(DMatrix::from_fn(n, d, |i, j| values[i * d + j]))
}

pub fn write_matrix_bin(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + m.len() * 8);
    bytes.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    write_bytes_atomic(path, &bytes)
}

/// One value per line (or a single CSV column).
pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim().trim_end_matches(',');
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse::<f64>()
                .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?,
        );
    }
    if out.is_empty() {
        return Err(parse_err(path, "no values"));
    }
    ensure_finite(&out, "vector file")?;
    Ok(out)
}

#[derive(Deserialize)]
struct UpdateRecord {
    #[allow(dead_code)]
    round: u64,
    entries: Vec<(usize, f64)>,
}

/// JSON-lines update stream: one `{"round": r, "entries": [[index, value], ...]}`
/// object per line.
pub fn load_updates_jsonl(path: &Path) -> Result<Vec<SparseUpdate>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut updates = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: UpdateRecord = serde_json::from_str(line)
            .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?;
        updates.push(SparseUpdate::new(record.entries)?);
    }
    Ok(updates)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Writes the full content through a temporary sibling file and renames it
/// into place.
pub fn write_bytes_atomic(path: &Path, content: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| w.write_all(content).map_err(|e| io_err(path, e)))
}

pub fn write_string_atomic(path: &Path, content: &str) -> Result<()> {
    write_bytes_atomic(path, content.as_bytes())
}

/// Runs `fill` against a temporary file and persists only on success; any
/// error (including one injected by `fill` itself) leaves no trace at the
/// target path.
pub fn write_atomic_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(|e| io_err(path, e))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path)
        .map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `iteration,truth,naive,robust,baseline1,baseline2`; estimators absent
/// from `labels` leave their fields empty.
pub fn attack_csv(labels: &[String], records: &[crate::attack::IterationRecord]) -> String {
    let columns = ["naive", "robust", "baseline1", "baseline2"];
    let mut out = String::from("iteration,truth,naive,robust,baseline1,baseline2\n");
    for rec in records {
        out.push_str(&format!("{},{}", rec.iteration, rec.truth));
        for col in columns {
            let field = labels
                .iter()
                .position(|l| l == col)
                .map(|i| rec.estimates[i].to_string())
                .unwrap_or_default();
            out.push(',');
            out.push_str(&field);
        }
        out.push('\n');
    }
    out
}

/// `round,estimate,exact` with the exact column filled only when the oracle
/// ran.
pub fn regression_csv(rows: &[(usize, f64, Option<f64>)]) -> String {
    let mut out = String::from("round,estimate,exact\n");
    for &(round, estimate, exact) in rows {
        out.push_str(&format!("{round},{estimate},{}\n", fmt_opt(exact)));
    }
    out
}

/// `query_index,point_index,estimate,exact`.
pub fn distance_csv(rows: &[(usize, usize, f64, Option<f64>)]) -> String {
    let mut out = String::from("query_index,point_index,estimate,exact\n");
    for &(q, p, estimate, exact) in rows {
        out.push_str(&format!("{q},{p},{estimate},{}\n", fmt_opt(exact)));
    }
    out
}

/// `query_index,estimate,exact,promise_met`.
pub fn kde_csv(rows: &[(usize, f64, Option<f64>, bool)]) -> String {
    let mut out = String::from("query_index,estimate,exact,promise_met\n");
    for &(q, estimate, exact, promise) in rows {
        out.push_str(&format!("{q},{estimate},{},{promise}\n", fmt_opt(exact)));
    }
    out
}
