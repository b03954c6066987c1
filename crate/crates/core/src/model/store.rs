use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ConfidenceRecord, EvaluationRun, RecordError, RunHeader};

/// Version written into, and required from, every run-store header.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run store {path} is empty (missing header line)")]
    MissingHeader { path: PathBuf },
    #[error("run store {path}: schema version mismatch (file has `{found}`, this build reads `{expected}`)")]
    SchemaVersion {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("run store {path}: invalid JSON on line {line}: {message}")]
    InvalidLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("run store {path}: {source}")]
    Inconsistent {
        path: PathBuf,
        #[source]
        source: RecordError,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `run` as JSONL: the header on line 1, then one record per line.
///
/// The file is written to a sibling temporary and renamed into place.
pub fn write_run(path: impl AsRef<Path>, run: &EvaluationRun) -> Result<(), StoreError> {
    let path = path.as_ref();
    run.validate().map_err(|source| StoreError::Inconsistent {
        path: path.to_path_buf(),
        source,
    })?;
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &run.header)?;
        out.write_all(b"\n").map_err(io_err(&tmp))?;
        for record in &run.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n").map_err(io_err(&tmp))?;
        }
        out.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads and validates a run store written by [`write_run`] or [`RunWriter`].
pub fn read_run(path: impl AsRef<Path>) -> Result<EvaluationRun, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header_line = match lines.next() {
        Some((_, line)) => line.map_err(io_err(path))?,
        None => {
            return Err(StoreError::MissingHeader {
                path: path.to_path_buf(),
            })
        }
    };
    let invalid = |line: usize, e: serde_json::Error| StoreError::InvalidLine {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    };
    let raw: serde_json::Value = serde_json::from_str(&header_line).map_err(|e| invalid(1, e))?;
    let found = raw
        .get("schema_version")
        .and_then(|v| v.as_str())
        .unwrap_or("<missing>");
    if found != SCHEMA_VERSION {
        return Err(StoreError::SchemaVersion {
            path: path.to_path_buf(),
            found: found.to_string(),
            expected: SCHEMA_VERSION.to_string(),
        });
    }
    let header: RunHeader = serde_json::from_value(raw).map_err(|e| invalid(1, e))?;

    let mut records = Vec::new();
    for (index, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConfidenceRecord =
            serde_json::from_str(&line).map_err(|e| invalid(index + 1, e))?;
        records.push(record);
    }
    let run = EvaluationRun { header, records };
    run.validate().map_err(|source| StoreError::Inconsistent {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(run)
}

/// Single appending writer for a run store that is being produced.
pub struct RunWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunWriter {
    /// Creates (truncating) the store and writes its header line.
    pub fn create(path: impl AsRef<Path>, header: &RunHeader) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n").map_err(io_err(&path))?;
        out.flush().map_err(io_err(&path))?;
        Ok(Self { path, out })
    }

    /// Opens an existing store for appending more records.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    /// Appends one record and flushes it to disk.
    pub fn append(&mut self, record: &ConfidenceRecord) -> Result<(), StoreError> {
        record
            .validate()
            .map_err(|source| StoreError::Inconsistent {
                path: self.path.clone(),
                source,
            })?;
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}
