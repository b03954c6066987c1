use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AnswerFormat, SubtaskKind, TestPoint};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read benchmark {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed benchmark JSON in {path} at line {line}, column {column}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: entry {index} has unknown subtask label `{label}`")]
    UnknownSubtask {
        path: PathBuf,
        index: usize,
        label: String,
    },
    #[error("{path}: duplicate id `{id}` in subtask {subtask} (entry {index})")]
    DuplicateId {
        path: PathBuf,
        index: usize,
        subtask: SubtaskKind,
        id: String,
    },
    #[error("{path}: entry {index}: {reason}")]
    InvalidEntry {
        path: PathBuf,
        index: usize,
        reason: String,
    },
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    id: Value,
    subtask: String,
    code: String,
    question: Value,
    gold: Value,
    #[serde(default)]
    answer_format: Option<String>,
    #[serde(default)]
    metadata: Option<BTreeMap<String, Value>>,
}

/// Test points loaded from one ingestion file.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// File stem; becomes the `benchmark` part of every point reference.
    pub name: String,
    pub path: PathBuf,
    /// SHA-256 hex digest of the file bytes.
    pub digest: String,
    pub points: Vec<TestPoint>,
    /// Points per subtask after filtering.
    pub counts: BTreeMap<SubtaskKind, usize>,
}

fn scalar_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Reads a benchmark-ingestion JSON file: a top-level array of
/// `{id, subtask, code, question, gold, answer_format?, metadata?}` objects.
///
/// Duplicate ids within a subtask, unknown subtask labels and empty
/// code/gold are hard errors. Validation covers the whole file before
/// `kind_filter` is applied.
pub fn load_benchmark(
    path: impl AsRef<Path>,
    kind_filter: Option<&BTreeSet<SubtaskKind>>,
) -> Result<Benchmark, IngestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let entries: Vec<RawEntry> =
        serde_json::from_slice(&bytes).map_err(|e| IngestError::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".to_string());

    let invalid = |index: usize, reason: &str| IngestError::InvalidEntry {
        path: path.to_path_buf(),
        index,
        reason: reason.to_string(),
    };

    let mut seen: HashSet<(SubtaskKind, String)> = HashSet::new();
    let mut points = Vec::with_capacity(entries.len());
    for (index, raw) in entries.into_iter().enumerate() {
        let subtask: SubtaskKind =
            raw.subtask
                .parse()
                .map_err(|_| IngestError::UnknownSubtask {
                    path: path.to_path_buf(),
                    index,
                    label: raw.subtask.clone(),
                })?;
        let id = scalar_text(&raw.id);
        if id.trim().is_empty() {
            return Err(invalid(index, "empty id"));
        }
        if raw.code.trim().is_empty() {
            return Err(invalid(index, "empty code"));
        }
        let gold = scalar_text(&raw.gold);
        if gold.trim().is_empty() {
            return Err(invalid(index, "empty gold answer"));
        }
        let answer_format = match raw.answer_format.as_deref() {
            None | Some("literal") => AnswerFormat::Literal,
            Some("choice") => AnswerFormat::Choice,
            Some(_) => {
                return Err(invalid(
                    index,
                    "answer_format must be `literal` or `choice`",
                ))
            }
        };
        if !seen.insert((subtask, id.clone())) {
            return Err(IngestError::DuplicateId {
                path: path.to_path_buf(),
                index,
                subtask,
                id,
            });
        }
        let metadata = raw
            .metadata
            .unwrap_or_default()
            .into_iter()
            .map(|(k, v)| (k, scalar_text(&v)))
            .collect();
        points.push(TestPoint {
            benchmark: name.clone(),
            id,
            subtask,
            code: raw.code,
            question: scalar_text(&raw.question),
            gold,
            answer_format,
            metadata,
        });
    }

    if let Some(filter) = kind_filter {
        points.retain(|p| filter.contains(&p.subtask));
    }
    let mut counts = BTreeMap::new();
    for p in &points {
        *counts.entry(p.subtask).or_insert(0usize) += 1;
    }
    if points.is_empty() {
        log::warn!("benchmark {} contains no test points", path.display());
    }
    for (kind, count) in &counts {
        log::info!("{}: {count} {kind} points", name);
    }

    Ok(Benchmark {
        name,
        path: path.to_path_buf(),
        digest,
        points,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_array_gives_empty_benchmark() {
        let f = write("[]");
        let b = load_benchmark(f.path(), None).unwrap();
        assert!(b.points.is_empty());
        assert!(b.counts.is_empty());
    }

    #[test]
    fn counts_per_subtask_and_filter() {
        let f = write(
            r#"[
              {"id": "a", "subtask": "CCP", "code": "x = 1", "question": "line 1", "gold": "yes"},
              {"id": "a", "subtask": "OP", "code": "print(1)", "question": "", "gold": 1},
              {"id": 3, "subtask": "CRUXEval-O", "code": "def f(x): return x", "question": "2", "gold": "2",
               "metadata": {"origin": "sample_3", "n": 4}}
            ]"#,
        );
        let b = load_benchmark(f.path(), None).unwrap();
        assert_eq!(b.points.len(), 3);
        assert_eq!(b.counts[&SubtaskKind::Ccp], 1);
        assert_eq!(b.points[1].gold, "1");
        assert_eq!(b.points[2].id, "3");
        assert_eq!(b.points[2].subtask, SubtaskKind::CruxO);
        assert_eq!(b.points[2].metadata["n"], "4");

        let only_ccp: BTreeSet<_> = [SubtaskKind::Ccp].into_iter().collect();
        let b = load_benchmark(f.path(), Some(&only_ccp)).unwrap();
        assert_eq!(b.points.len(), 1);
        assert_eq!(b.counts.len(), 1);
    }

    #[test]
    fn duplicate_id_in_subtask_is_rejected() {
        let f = write(
            r#"[{"id": "a", "subtask": "OP", "code": "c", "question": "q", "gold": "g"},
                {"id": "a", "subtask": "OP", "code": "c", "question": "q", "gold": "g"}]"#,
        );
        let err = load_benchmark(f.path(), None).unwrap_err();
        assert!(
            matches!(err, IngestError::DuplicateId { index: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn unknown_subtask_is_rejected() {
        let f =
            write(r#"[{"id": "a", "subtask": "XYZ", "code": "c", "question": "q", "gold": "g"}]"#);
        let err = load_benchmark(f.path(), None).unwrap_err();
        assert!(matches!(err, IngestError::UnknownSubtask { ref label, .. } if label == "XYZ"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = write("[\n{\"id\": \"a\",\n\"subtask\": }\n]");
        match load_benchmark(f.path(), None).unwrap_err() {
            IngestError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_gold_is_rejected() {
        let f =
            write(r#"[{"id": "a", "subtask": "EPP", "code": "c", "question": "q", "gold": "  "}]"#);
        assert!(matches!(
            load_benchmark(f.path(), None).unwrap_err(),
            IngestError::InvalidEntry { .. }
        ));
    }
}
