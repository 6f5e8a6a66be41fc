//! Atomic file output and the CSV / JSON encodings of results.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Writes through a temporary file in the target directory, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One CSV row per item, header from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    write_atomic(path, &bytes)
}

/// Row-major nested lists of `[re, im]` pairs.
pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<Complex64>]) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
