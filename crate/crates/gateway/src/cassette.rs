use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One recorded exchange, stored as a JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_key: String,
    pub request_canonical: String,
    pub response: String,
    pub status: u16,
    pub recorded_at: String,
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cassette {path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cassette {0} is read-only")]
    ReadOnly(PathBuf),
}

/// Request-key indexed responses backed by an append-only JSONL file.
#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    entries: HashMap<String, CassetteEntry>,
    digest: String,
    writer: Option<BufWriter<File>>,
}

impl Cassette {
    /// Loads `path` for lookups only. The file must exist.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        Self::load(path.as_ref(), false)
    }

    /// Loads `path` if present and prepares it for appending.
    pub fn open_for_append(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        Self::load(path.as_ref(), true)
    }

    fn load(path: &Path, writable: bool) -> Result<Self, CassetteError> {
        let io_err = |source| CassetteError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = match fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) if writable && e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let digest = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|e| CassetteError::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(line).map_err(|e| CassetteError::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.entry(entry.request_key.clone()).or_insert(entry);
        }
        let writer = if writable {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?;
            Some(BufWriter::new(file))
        } else {
            None
        };
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            digest,
            writer,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// SHA-256 of the file contents as loaded.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, request_key: &str) -> Option<&CassetteEntry> {
        self.entries.get(request_key)
    }

    /// Appends `entry` and flushes. Keys already present are kept as is.
    pub fn insert(&mut self, entry: CassetteEntry) -> Result<(), CassetteError> {
        if self.entries.contains_key(&entry.request_key) {
            return Ok(());
        }
        let writer = self
            .writer
            .as_mut()
            .ok_or_else(|| CassetteError::ReadOnly(self.path.clone()))?;
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|source| CassetteError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.entries.insert(entry.request_key.clone(), entry);
        Ok(())
    }
}
