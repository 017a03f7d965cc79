//! Metrics files: `metrics.jsonl` (one JSON object per line) and
//! `metrics.csv` with the same columns.

use std::fs;
use std::io::Write;
use std::path::Path;

use accordion_core::schemes::MetricsRecord;

use crate::error::{format_err, io_err, Result};

pub const JSONL_FILE: &str = "metrics.jsonl";
pub const CSV_FILE: &str = "metrics.csv";

/// Appends records to both metrics files as they arrive.
pub struct MetricsWriter {
    jsonl: fs::File,
    csv: csv::Writer<fs::File>,
    dir: std::path::PathBuf,
}

impl MetricsWriter {
    /// Truncates any existing metrics in `dir`.
    pub fn create(dir: &Path) -> Result<Self> {
        let jpath = dir.join(JSONL_FILE);
        let cpath = dir.join(CSV_FILE);
        let jsonl = fs::File::create(&jpath).map_err(io_err(&jpath))?;
        let csv = csv::Writer::from_path(&cpath).map_err(|e| csv_err(&cpath, e))?;
        Ok(Self { jsonl, csv, dir: dir.to_path_buf() })
    }

    pub fn push(&mut self, record: &MetricsRecord) -> Result<()> {
        let jpath = self.dir.join(JSONL_FILE);
        let line = serde_json::to_string(record).expect("record is plain data");
        writeln!(self.jsonl, "{line}").map_err(io_err(&jpath))?;
        let cpath = self.dir.join(CSV_FILE);
        self.csv.serialize(record).map_err(|e| csv_err(&cpath, e))?;
        self.csv.flush().map_err(io_err(&cpath))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> crate::Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => crate::Error::Io { path: path.to_path_buf(), source },
        kind => format_err(path, offset, format!("{kind:?}")),
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut offset = 0u64;
    let mut out = Vec::new();
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| format_err(path, offset, e.to_string()))?);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}
