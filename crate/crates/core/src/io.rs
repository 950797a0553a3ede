//! CSV files for parity samples and sweep results. The first line of every
//! file is a `# schema: ...` comment naming the format version.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simulate::ParitySample;

pub const PARITY_SCHEMA: &str = "ghzcs.parity_samples.v1";

/// Serializes `rows` as CSV under a schema comment line.
pub fn write_csv<T: Serialize>(schema: &str, rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(format!("# schema: {schema}\n{body}"))
}

/// Parses CSV written by [`write_csv`], checking the schema line.
pub fn read_csv<T: DeserializeOwned>(schema: &str, text: &str) -> Result<Vec<T>> {
    let first = text.lines().next().unwrap_or_default();
    let found = first.strip_prefix("# schema: ").map(str::trim);
    if found != Some(schema) {
        return Err(Error::Parse(format!("expected schema {schema:?}, found line {first:?}")));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| Error::Parse(e.to_string()))).collect()
}

pub fn parity_samples_to_csv<F: Real>(samples: &[ParitySample<F>]) -> Result<String> {
    write_csv(PARITY_SCHEMA, samples)
}

pub fn parity_samples_from_csv<F: Real>(text: &str) -> Result<Vec<ParitySample<F>>> {
    read_csv(PARITY_SCHEMA, text)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
