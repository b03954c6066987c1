//! Execution-based verification of CRUX answers.
//!
//! [`SubprocessExecutor`] speaks the exec-grader JSON-lines protocol over a
//! child process's stdio: the child first prints `{"protocol":"1"}`, then
//! answers each `{id, function_source, input_expr, expected_output,
//! cpu_timeout}` line with one `{id, status, observed, detail}` line.
//! [`RecordedExecutor`] answers from a table of previously observed
//! executions and needs no interpreter.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::literal::parse_literal;

pub const PROTOCOL_VERSION: &str = "1";
pub const DEFAULT_CPU_TIMEOUT: f64 = 5.0;

/// Run `function_source` on `input_expr` and compare with `expected_output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecTask {
    pub function_source: String,
    pub input_expr: String,
    pub expected_output: String,
    pub cpu_timeout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_cap: Option<u64>,
}

impl ExecTask {
    pub fn new(
        function_source: impl Into<String>,
        input_expr: impl Into<String>,
        expected_output: impl Into<String>,
    ) -> Self {
        Self {
            function_source: function_source.into(),
            input_expr: input_expr.into(),
            expected_output: expected_output.into(),
            cpu_timeout: DEFAULT_CPU_TIMEOUT,
            memory_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecStatus {
    Pass,
    Fail,
    Error,
    Timeout,
    UnsafeRejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub status: ExecStatus,
    #[serde(default)]
    pub observed: Option<String>,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("cannot start executor `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("executor protocol error: {0}")]
    Protocol(String),
    #[error("executor did not answer within {0:?}")]
    Unresponsive(Duration),
    #[error("executor i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no recorded execution for input `{input}`")]
    NotRecorded { input: String },
    #[error("cannot load execution table {path}: {message}")]
    Table { path: PathBuf, message: String },
}

/// Something that can run a benchmark function on an input.
pub trait Executor: Send {
    fn evaluate(&mut self, task: &ExecTask) -> Result<ExecResult, ExecutorError>;
}

#[derive(Serialize)]
struct WireRequest<'a> {
    id: u64,
    function_source: &'a str,
    input_expr: &'a str,
    expected_output: &'a str,
    cpu_timeout: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    memory_cap: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    id: serde_json::Value,
    status: ExecStatus,
    #[serde(default)]
    observed: Option<String>,
    #[serde(default)]
    detail: String,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for an exec-grader process. Restarts the child after it stops
/// answering.
pub struct SubprocessExecutor {
    command: Vec<String>,
    session: Option<Session>,
    next_id: u64,
    /// Extra wall time allowed on top of each task's CPU timeout.
    pub grace: Duration,
}

impl SubprocessExecutor {
    /// Starts `command[0]` with the remaining elements as arguments and
    /// checks the protocol handshake.
    pub fn spawn(command: &[String]) -> Result<Self, ExecutorError> {
        if command.is_empty() {
            return Err(ExecutorError::Protocol("empty executor command".into()));
        }
        let mut exec = Self {
            command: command.to_vec(),
            session: None,
            next_id: 0,
            grace: Duration::from_secs(10),
        };
        exec.session = Some(exec.start()?);
        Ok(exec)
    }

    fn start(&self) -> Result<Session, ExecutorError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ExecutorError::Spawn {
                program: self.command[0].clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let session = Session {
            child,
            stdin,
            lines: rx,
        };
        let hello = Self::read_line(&session, self.grace)?;
        let value: serde_json::Value = serde_json::from_str(&hello)
            .map_err(|e| ExecutorError::Protocol(format!("bad handshake `{hello}`: {e}")))?;
        match value.get("protocol").and_then(|v| v.as_str()) {
            Some(PROTOCOL_VERSION) => Ok(session),
            other => Err(ExecutorError::Protocol(format!(
                "expected protocol {PROTOCOL_VERSION}, got {other:?}"
            ))),
        }
    }

    fn read_line(session: &Session, wait: Duration) -> Result<String, ExecutorError> {
        match session.lines.recv_timeout(wait) {
            Ok(line) => Ok(line?),
            Err(RecvTimeoutError::Timeout) => Err(ExecutorError::Unresponsive(wait)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(ExecutorError::Protocol("executor closed its output".into()))
            }
        }
    }
}

impl Executor for SubprocessExecutor {
    fn evaluate(&mut self, task: &ExecTask) -> Result<ExecResult, ExecutorError> {
        if self.session.is_none() {
            self.session = Some(self.start()?);
        }
        self.next_id += 1;
        let id = self.next_id;
        let mut line = serde_json::to_string(&WireRequest {
            id,
            function_source: &task.function_source,
            input_expr: &task.input_expr,
            expected_output: &task.expected_output,
            cpu_timeout: task.cpu_timeout,
            memory_cap: task.memory_cap,
        })
        .map_err(|e| ExecutorError::Protocol(e.to_string()))?;
        line.push('\n');

        let wait = Duration::from_secs_f64(task.cpu_timeout.max(0.0)) + self.grace;
        let session = self.session.as_mut().expect("session started");
        let outcome = session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
            .map_err(ExecutorError::from)
            .and_then(|_| Self::read_line(session, wait));
        let reply = match outcome {
            Ok(reply) => reply,
            Err(e) => {
                self.session = None;
                return Err(e);
            }
        };
        let response: WireResponse = serde_json::from_str(&reply)
            .map_err(|e| ExecutorError::Protocol(format!("bad response `{reply}`: {e}")))?;
        if response.id != serde_json::json!(id) {
            self.session = None;
            return Err(ExecutorError::Protocol(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        Ok(ExecResult {
            status: response.status,
            observed: response.observed,
            detail: response.detail,
        })
    }
}

/// One line of an execution table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExecution {
    pub function_source: String,
    pub input_expr: String,
    /// Outcome of running the function, ignoring any expected output:
    /// `PASS` means it returned `observed`.
    pub status: ExecStatus,
    #[serde(default)]
    pub observed: Option<String>,
    #[serde(default)]
    pub detail: String,
}

/// Answers tasks from recorded executions keyed by `(source, input)`.
#[derive(Debug, Clone, Default)]
pub struct RecordedExecutor {
    table: HashMap<(String, String), RecordedExecution>,
}

impl RecordedExecutor {
    pub fn new(entries: impl IntoIterator<Item = RecordedExecution>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| {
                (
                    (e.function_source.clone(), e.input_expr.trim().to_string()),
                    e,
                )
            })
            .collect();
        Self { table }
    }

    /// Loads a JSONL table of [`RecordedExecution`] lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExecutorError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ExecutorError::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(line).map_err(|e| ExecutorError::Table {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })?,
            );
        }
        Ok(Self::new(entries))
    }
}

impl Executor for RecordedExecutor {
    fn evaluate(&mut self, task: &ExecTask) -> Result<ExecResult, ExecutorError> {
        let key = (
            task.function_source.clone(),
            task.input_expr.trim().to_string(),
        );
        let entry = self
            .table
            .get(&key)
            .ok_or_else(|| ExecutorError::NotRecorded {
                input: task.input_expr.clone(),
            })?;
        if entry.status != ExecStatus::Pass {
            return Ok(ExecResult {
                status: entry.status,
                observed: entry.observed.clone(),
                detail: entry.detail.clone(),
            });
        }
        let observed = entry.observed.clone().unwrap_or_default();
        let status = match (
            parse_literal(&observed),
            parse_literal(&task.expected_output),
        ) {
            (Ok(a), Ok(b)) if a == b => ExecStatus::Pass,
            (Ok(_), Ok(_)) => ExecStatus::Fail,
            (Ok(_), Err(e)) => {
                return Ok(ExecResult {
                    status: ExecStatus::Fail,
                    observed: Some(observed),
                    detail: format!("expected output is not a literal: {e}"),
                })
            }
            (Err(e), _) => {
                return Ok(ExecResult {
                    status: ExecStatus::Error,
                    observed: Some(observed),
                    detail: format!("recorded output is not a literal: {e}"),
                })
            }
        };
        Ok(ExecResult {
            status,
            observed: Some(observed),
            detail: String::new(),
        })
    }
}
