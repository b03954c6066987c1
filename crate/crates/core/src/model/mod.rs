//! Shared domain types: subtasks, test points, confidence records and runs.

mod benchmark;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use benchmark::{load_benchmark, Benchmark, IngestError};
pub use store::{read_run, write_run, RunWriter, StoreError, SCHEMA_VERSION};

/// The six code reasoning subtasks a test point can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubtaskKind {
    /// Code coverage prediction: does a statement run under the given input?
    #[serde(rename = "CCP")]
    Ccp,
    /// Program state prediction: type and value of a variable.
    #[serde(rename = "PSP")]
    Psp,
    /// Execution path prediction: next statement after a breakpoint.
    #[serde(rename = "EPP")]
    Epp,
    /// Output prediction for a whole program.
    #[serde(rename = "OP")]
    Op,
    /// Function input prediction from a given output.
    #[serde(rename = "CRUX_I")]
    CruxI,
    /// Function output prediction from a given input.
    #[serde(rename = "CRUX_O")]
    CruxO,
}

impl SubtaskKind {
    pub const ALL: [SubtaskKind; 6] = [
        SubtaskKind::Ccp,
        SubtaskKind::Psp,
        SubtaskKind::Epp,
        SubtaskKind::Op,
        SubtaskKind::CruxI,
        SubtaskKind::CruxO,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SubtaskKind::Ccp => "CCP",
            SubtaskKind::Psp => "PSP",
            SubtaskKind::Epp => "EPP",
            SubtaskKind::Op => "OP",
            SubtaskKind::CruxI => "CRUX_I",
            SubtaskKind::CruxO => "CRUX_O",
        }
    }

    /// Whether grading needs to execute the function.
    pub fn is_executed(self) -> bool {
        matches!(self, SubtaskKind::CruxI | SubtaskKind::CruxO)
    }
}

impl fmt::Display for SubtaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown subtask label `{0}`")]
pub struct UnknownSubtask(pub String);

impl FromStr for SubtaskKind {
    type Err = UnknownSubtask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "CCP" => Ok(SubtaskKind::Ccp),
            "PSP" => Ok(SubtaskKind::Psp),
            "EPP" => Ok(SubtaskKind::Epp),
            "OP" => Ok(SubtaskKind::Op),
            "CRUX_I" | "CRUXEval-I" => Ok(SubtaskKind::CruxI),
            "CRUX_O" | "CRUXEval-O" => Ok(SubtaskKind::CruxO),
            other => Err(UnknownSubtask(other.to_string())),
        }
    }
}

/// How a gold answer is meant to be compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerFormat {
    /// A free literal (value, statement text, boolean word).
    #[default]
    Literal,
    /// A choice label such as `B`.
    Choice,
}

/// One benchmark question.
///
/// For CRUX kinds `question` holds the side of the I/O pair shown to the
/// model and `gold` the hidden reference side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPoint {
    pub benchmark: String,
    pub id: String,
    pub subtask: SubtaskKind,
    pub code: String,
    pub question: String,
    pub gold: String,
    #[serde(default)]
    pub answer_format: AnswerFormat,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl TestPoint {
    pub fn point_ref(&self) -> PointRef {
        PointRef {
            benchmark: self.benchmark.clone(),
            subtask: self.subtask,
            id: self.id.clone(),
        }
    }
}

/// Locates a test point inside the benchmarks of a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointRef {
    pub benchmark: String,
    pub subtask: SubtaskKind,
    pub id: String,
}

/// How a confidence value was elicited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStrategy {
    /// Answer and confidence in one call.
    Intrinsic,
    /// Same conversation continued with a self-doubt instruction.
    Reassess,
    /// A fresh evaluator context judging the answer.
    Reflective,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 3] = [
        PromptStrategy::Intrinsic,
        PromptStrategy::Reassess,
        PromptStrategy::Reflective,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PromptStrategy::Intrinsic => "intrinsic",
            PromptStrategy::Reassess => "reassess",
            PromptStrategy::Reflective => "reflective",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown prompt strategy `{0}` (expected intrinsic, reassess or reflective)")]
pub struct UnknownStrategy(pub String);

impl FromStr for PromptStrategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intrinsic" => Ok(PromptStrategy::Intrinsic),
            "reassess" => Ok(PromptStrategy::Reassess),
            "reflective" => Ok(PromptStrategy::Reflective),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

/// Correctness of the answer behind a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Delta {
    Incorrect,
    Correct,
    Ungraded,
}

impl Delta {
    pub fn from_correct(correct: bool) -> Self {
        if correct {
            Delta::Correct
        } else {
            Delta::Incorrect
        }
    }

    /// `Some(true|false)` once graded.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Delta::Correct => Some(true),
            Delta::Incorrect => Some(false),
            Delta::Ungraded => None,
        }
    }
}

// Stored as 0, 1 or "UNGRADED".
impl Serialize for Delta {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Delta::Incorrect => serializer.serialize_u8(0),
            Delta::Correct => serializer.serialize_u8(1),
            Delta::Ungraded => serializer.serialize_str("UNGRADED"),
        }
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::Number(n) if n.as_u64() == Some(0) => Ok(Delta::Incorrect),
            serde_json::Value::Number(n) if n.as_u64() == Some(1) => Ok(Delta::Correct),
            serde_json::Value::String(s) if s == "UNGRADED" => Ok(Delta::Ungraded),
            other => Err(D::Error::custom(format!(
                "delta must be 0, 1 or \"UNGRADED\", got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseStatus {
    Ok,
    Unparseable,
}

/// Why a response could not be turned into a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnparseableReason {
    NoJson,
    MissingField,
    OutOfRange,
    NonInteger,
    /// The intrinsic answer this record would post-process was unparseable.
    IntrinsicUnparseable,
}

impl fmt::Display for UnparseableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnparseableReason::NoJson => "NO_JSON",
            UnparseableReason::MissingField => "MISSING_FIELD",
            UnparseableReason::OutOfRange => "OUT_OF_RANGE",
            UnparseableReason::NonInteger => "NON_INTEGER",
            UnparseableReason::IntrinsicUnparseable => "INTRINSIC_UNPARSEABLE",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GradeMethod {
    Exact,
    Normalized,
    Executed,
}

/// One (model, strategy, test point) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub record_id: String,
    pub model: String,
    pub strategy: PromptStrategy,
    pub point: PointRef,
    /// Record id of the intrinsic record this one post-processes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_ref: Option<String>,
    pub raw_response: String,
    pub parsed_answer: Option<String>,
    pub confidence: Option<f64>,
    pub delta: Delta,
    pub parse_status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparseable_reason: Option<UnparseableReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade_method: Option<GradeMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade_detail: Option<String>,
    /// Whether a format reminder was needed to obtain the response.
    #[serde(default)]
    pub reasked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_key: Option<String>,
    /// When the response was produced (taken from the cassette on replay).
    pub responded_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("record {0}: confidence must be present exactly when parse_status is OK")]
    ConfidenceStatusMismatch(String),
    #[error("record {0}: confidence {1} outside [0, 1]")]
    ConfidenceOutOfRange(String, String),
    #[error("record {0}: {1} record lacks an intrinsic reference")]
    MissingIntrinsicRef(String, PromptStrategy),
    #[error("record {0}: intrinsic reference `{1}` does not resolve to an intrinsic record")]
    DanglingIntrinsicRef(String, String),
    #[error("duplicate record id `{0}`")]
    DuplicateRecordId(String),
    #[error("record {0}: calibrated confidence {1} outside [0, 1]")]
    CalibratedOutOfRange(String, String),
}

impl ConfidenceRecord {
    /// Deterministic id for the record of `strategy` on `point`.
    pub fn make_id(point: &PointRef, strategy: PromptStrategy) -> String {
        format!(
            "{}/{}/{}/{}",
            point.benchmark, point.subtask, point.id, strategy
        )
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), RecordError> {
        let ok = self.parse_status == ParseStatus::Ok;
        if ok != self.confidence.is_some() {
            return Err(RecordError::ConfidenceStatusMismatch(
                self.record_id.clone(),
            ));
        }
        if let Some(p) = self.confidence {
            if !(0.0..=1.0).contains(&p) {
                return Err(RecordError::ConfidenceOutOfRange(
                    self.record_id.clone(),
                    p.to_string(),
                ));
            }
        }
        if let Some(p) = self.calibrated_confidence {
            if !(0.0..=1.0).contains(&p) {
                return Err(RecordError::CalibratedOutOfRange(
                    self.record_id.clone(),
                    p.to_string(),
                ));
            }
        }
        if self.strategy != PromptStrategy::Intrinsic && self.intrinsic_ref.is_none() {
            return Err(RecordError::MissingIntrinsicRef(
                self.record_id.clone(),
                self.strategy,
            ));
        }
        Ok(())
    }

    /// `(confidence, correct)` when the record counts towards metrics.
    pub fn observation(&self) -> Option<(f64, bool)> {
        Some((self.confidence?, self.delta.as_bool()?))
    }

    /// Same as [`observation`](Self::observation) but with the calibrated value.
    pub fn calibrated_observation(&self) -> Option<(f64, bool)> {
        Some((self.calibrated_confidence?, self.delta.as_bool()?))
    }
}

/// Whether LLM calls go to the network, to the network and a cassette, or to
/// a cassette only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallMode {
    Live,
    Record,
    Replay,
}

impl FromStr for CallMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(CallMode::Live),
            "record" => Ok(CallMode::Record),
            "replay" => Ok(CallMode::Replay),
            other => Err(format!(
                "unknown mode `{other}` (expected live, record or replay)"
            )),
        }
    }
}

/// Everything needed to reproduce a run. Serialized verbatim into the
/// run-store header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmarks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtasks: Option<Vec<SubtaskKind>>,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub strategies: Vec<PromptStrategy>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub seed: u64,
    pub mode: CallMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<String>,
    pub workers: usize,
    pub prompt_version: String,
}

/// Digests of the inputs a run was produced from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Benchmark path to SHA-256 hex digest.
    pub benchmark_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette_digest: Option<String>,
    pub grading_table_version: String,
}

/// Outcome of calibrating one (model, strategy, subtask) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGroup {
    pub model: String,
    pub strategy: PromptStrategy,
    pub subtask: SubtaskKind,
    pub n: usize,
    pub calibrated: bool,
    /// Per-fold `(A, B)` in fold order; empty when skipped.
    #[serde(default)]
    pub fold_parameters: Vec<(f64, f64)>,
}

/// Calibration bookkeeping stored in the header after `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub seed: u64,
    pub smoothing: bool,
    pub groups: Vec<CalibrationGroup>,
}

/// First line of a run store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: String,
    pub run_id: String,
    pub config: RunConfig,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
}

/// A header plus its append-only sequence of records.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRun {
    pub header: RunHeader,
    pub records: Vec<ConfidenceRecord>,
}

impl EvaluationRun {
    pub fn new(run_id: impl Into<String>, config: RunConfig, provenance: Provenance) -> Self {
        Self {
            header: RunHeader {
                schema_version: SCHEMA_VERSION.to_string(),
                run_id: run_id.into(),
                config,
                provenance,
                calibration: None,
            },
            records: Vec::new(),
        }
    }

    /// Checks record invariants, id uniqueness and intrinsic references.
    pub fn validate(&self) -> Result<(), RecordError> {
        let mut ids = HashSet::new();
        let mut intrinsic = HashSet::new();
        for record in &self.records {
            record.validate()?;
            if !ids.insert(record.record_id.as_str()) {
                return Err(RecordError::DuplicateRecordId(record.record_id.clone()));
            }
            if record.strategy == PromptStrategy::Intrinsic {
                intrinsic.insert(record.record_id.as_str());
            }
        }
        for record in &self.records {
            if let Some(reference) = &record.intrinsic_ref {
                if !intrinsic.contains(reference.as_str()) {
                    return Err(RecordError::DanglingIntrinsicRef(
                        record.record_id.clone(),
                        reference.clone(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn find(&self, record_id: &str) -> Option<&ConfidenceRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }
}
