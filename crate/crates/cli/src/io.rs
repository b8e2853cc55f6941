//! Matrix, pattern and FIR file formats.
//!
//! Matrices are headerless row-major CSV. FIR files start with a
//! `# rows=<r> cols=<c> T=<horizon>` line and hold one block per
//! coefficient, each introduced by a `# t=<index>` line. Pattern files use
//! the same layout with 0/1 entries.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DMatrix;
use tempfile::NamedTempFile;

use sls_core::FirMatrix;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn parse_rows(text: &str, what: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("reading {}", what.display()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn rows_to_matrix(rows: &[Vec<String>], what: &Path) -> Result<DMatrix<f64>> {
    ensure!(!rows.is_empty(), "{}: no rows", what.display());
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        ensure!(row.len() == cols, "{}: row {} has {} entries, expected {cols}", what.display(), i + 1, row.len());
        for s in row {
            let v: f64 = s
                .parse()
                .with_context(|| format!("{}: bad number {s:?} in row {}", what.display(), i + 1))?;
            ensure!(v.is_finite(), "{}: non-finite entry in row {}", what.display(), i + 1);
            data.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    rows_to_matrix(&parse_rows(&text, path)?, path)
}

/// Reads a 0/1 sparsity pattern.
pub fn read_pattern(path: &Path) -> Result<DMatrix<bool>> {
    let m = read_matrix(path)?;
    if let Some(v) = m.iter().find(|&&v| v != 0.0 && v != 1.0) {
        bail!("{}: pattern entries must be 0 or 1, found {v}", path.display());
    }
    Ok(m.map(|v| v == 1.0))
}

fn format_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

pub fn fir_bytes(f: &FirMatrix) -> Vec<u8> {
    let mut s = format!("# rows={} cols={} T={}\n", f.rows(), f.cols(), f.horizon());
    for (t, c) in f.coeffs().iter().enumerate() {
        writeln!(s, "# t={t}").unwrap();
        format_matrix(&mut s, c);
    }
    s.into_bytes()
}

fn read_blocks(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut shape: Option<(usize, usize, usize)> = None;
    let mut blocks: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(idx) = line.strip_prefix("# t=") {
            let t: usize = idx.trim().parse().with_context(|| format!("{}: bad block header {line:?}", path.display()))?;
            ensure!(t == blocks.len(), "{}: expected block t={}, found t={t}", path.display(), blocks.len());
            blocks.push(String::new());
        } else if let Some(rest) = line.strip_prefix("# rows=") {
            shape = Some(parse_shape(rest).with_context(|| format!("{}: bad shape line {line:?}", path.display()))?);
        } else if !line.is_empty() && !line.starts_with('#') {
            let Some(cur) = blocks.last_mut() else {
                bail!("{}: data before the first block header", path.display());
            };
            cur.push_str(line);
            cur.push('\n');
        }
    }
    ensure!(!blocks.is_empty(), "{}: no coefficient blocks", path.display());
    let coeffs = blocks
        .iter()
        .map(|b| rows_to_matrix(&parse_rows(b, path)?, path))
        .collect::<Result<Vec<_>>>()?;
    if let Some((r, c, h)) = shape {
        ensure!(coeffs.len() == h + 1, "{}: shape line says T={h} but {} blocks follow", path.display(), coeffs.len());
        for m in &coeffs {
            ensure!(m.shape() == (r, c), "{}: block is {}x{}, shape line says {r}x{c}", path.display(), m.nrows(), m.ncols());
        }
    }
    Ok(coeffs)
}

fn parse_shape(rest: &str) -> Result<(usize, usize, usize)> {
    let mut it = rest.split_whitespace();
    let rows = it.next().context("missing rows")?.parse()?;
    let cols = it.next().and_then(|s| s.strip_prefix("cols=")).context("missing cols")?.parse()?;
    let h = it.next().and_then(|s| s.strip_prefix("T=")).context("missing T")?.parse()?;
    Ok((rows, cols, h))
}

pub fn read_fir(path: &Path) -> Result<FirMatrix> {
    Ok(FirMatrix::new(read_blocks(path)?)?)
}

/// Reads a time-indexed 0/1 pattern in the FIR layout.
pub fn read_pattern_blocks(path: &Path) -> Result<Vec<DMatrix<bool>>> {
    read_blocks(path)?
        .into_iter()
        .map(|m| {
            if let Some(v) = m.iter().find(|&&v| v != 0.0 && v != 1.0) {
                bail!("{}: pattern entries must be 0 or 1, found {v}", path.display());
            }
            Ok(m.map(|v| v == 1.0))
        })
        .collect()
}
