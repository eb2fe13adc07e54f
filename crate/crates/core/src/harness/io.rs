//! CSV files with a versioned comment header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// `# hdvar schema=1 config_hash=<hex> seed=<n>`.
pub fn header_line(config_hash: &str, seed: u64) -> String {
    format!("# hdvar schema={SCHEMA_VERSION} config_hash={config_hash} seed={seed}")
}

pub fn write_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Column names only, for files that may legitimately have no rows.
pub fn write_csv_with_columns<T: Serialize>(
    path: &Path,
    header: &str,
    columns: &[&str],
    rows: &[T],
) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, header, rows);
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    writeln!(out, "{}", columns.join(","))?;
    out.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
