//! Benchmark records and their CSV / JSON forms.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::Path;

use ksmm_core::{Backend, KsPattern, Layout, ScalarKind};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// One timed (pattern, backend, layout) combination. Field order is the CSV
/// column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub pattern: KsPattern,
    pub backend: Backend,
    pub layout: Layout,
    pub scalar: ScalarKind,
    pub batch: usize,
    pub median_ns: f64,
    pub iqr_ns: f64,
    pub runs_per_measurement: usize,
    pub measurements: usize,
    pub h: f64,
    pub d_h: f64,
    pub density: f64,
    pub matrix_size: u64,
    pub threads: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 15] = [
    "pattern",
    "backend",
    "layout",
    "scalar",
    "batch",
    "median_ns",
    "iqr_ns",
    "runs_per_measurement",
    "measurements",
    "h",
    "d_h",
    "density",
    "matrix_size",
    "threads",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(BenchError::Usage(format!("unknown format {other:?}"))),
        }
    }
}

impl Format {
    /// Guesses from the extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Format(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    r.deserialize()
        .map(|rec| rec.map_err(BenchError::from))
        .collect()
}

pub fn write_records(path: &Path, records: &[BenchRecord], format: Format) -> Result<()> {
    let file = File::create(path)?;
    match format {
        Format::Csv => write_csv(file, records),
        Format::Json => {
            serde_json::to_writer_pretty(file, records)?;
            Ok(())
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>> {
    let file = BufReader::new(File::open(path)?);
    match Format::from_path(path) {
        Format::Csv => read_csv(file),
        Format::Json => Ok(serde_json::from_reader(file)?),
    }
}

/// Appends records one at a time, flushing after each, so a crash loses at
/// most the record being written.
pub struct CsvAppender {
    writer: csv::Writer<File>,
}

impl CsvAppender {
    /// Opens `path` for appending and writes the header if the file is empty.
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if empty {
            writer.write_record(CSV_HEADER)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    pub fn append(&mut self, record: &BenchRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.writer.flush()?;
        Ok(())
    }
}
