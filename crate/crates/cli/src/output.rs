//! CSV and JSON artifacts, written through a temporary file in the target
//! directory and renamed into place.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::sweep::{CellError, Metadata, SweepResult};

/// Writes `bytes` to `path` so that readers see either the old file or the
/// complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_bytes(result: &SweepResult) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(result.header).expect("writing to memory");
    for row in &result.rows {
        w.write_record(row.iter().map(|v| v.render())).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'static str,
    columns: &'static [&'static str],
    cells: usize,
    rows: usize,
    errors: &'a [CellError],
    estimates: &'a BTreeMap<String, f64>,
    metadata: &'a Metadata,
}

pub fn json_bytes(result: &SweepResult) -> Vec<u8> {
    let summary = Summary {
        experiment: result.experiment.name(),
        columns: result.header,
        cells: result.cells,
        rows: result.rows.len(),
        errors: &result.errors,
        estimates: &result.estimates,
        metadata: &result.metadata,
    };
    let mut out = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    out.push(b'\n');
    out
}

/// Paths of the two artifacts of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `<dir>/<experiment>.csv` and `<dir>/<experiment>.json`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> io::Result<Artifacts> {
    let name = result.experiment.name();
    let out = Artifacts {
        csv: dir.join(format!("{name}.csv")),
        json: dir.join(format!("{name}.json")),
    };
    write_atomic(&out.csv, &csv_bytes(result))?;
    write_atomic(&out.json, &json_bytes(result))?;
    Ok(out)
}
