//! Assigns correctness to parsed answers.
//!
//! | kind | rule |
//! |------|------|
//! | CCP | boolean words (`yes/no/true/false/executed/not executed`) compared as booleans |
//! | EPP, choice golds | case-folded, whitespace-trimmed text equality |
//! | PSP, OP | Python literal value equality, falling back to normalized text |
//! | CRUX_O | run the function on the given input, compare with the predicted output |
//! | CRUX_I | run the function on the predicted input, compare with the given output |
//!
//! The table is versioned by [`GRADING_TABLE_VERSION`]; changing any rule
//! must bump it.

mod executor;
mod literal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerFormat, Delta, GradeMethod, SubtaskKind, TestPoint};

pub use executor::{
    ExecResult, ExecStatus, ExecTask, Executor, ExecutorError, RecordedExecution, RecordedExecutor,
    SubprocessExecutor, DEFAULT_CPU_TIMEOUT, PROTOCOL_VERSION,
};
pub use literal::{parse_literal, Literal, LiteralError};

pub const GRADING_TABLE_VERSION: &str = "1";

/// Detail prefix for answers that could not be verified by execution.
pub const EXECUTION_ERROR: &str = "EXECUTION_ERROR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub method: GradeMethod,
    pub detail: String,
}

impl Verdict {
    fn new(correct: bool, method: GradeMethod, detail: impl Into<String>) -> Self {
        Self {
            correct,
            method,
            detail: detail.into(),
        }
    }

    pub fn delta(&self) -> Delta {
        Delta::from_correct(self.correct)
    }
}

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("grading {0} answers requires an executor")]
    ExecutorUnavailable(SubtaskKind),
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_outer_quotes(text: &str) -> &str {
    for q in ['"', '\'', '`'] {
        if text.len() >= 2 && text.starts_with(q) && text.ends_with(q) {
            return &text[1..text.len() - 1];
        }
    }
    text
}

/// Text used when a side does not parse as a literal.
fn surface(text: &str) -> String {
    let t = text.trim();
    let t = t.strip_suffix('.').unwrap_or(t).trim_end();
    collapse_ws(strip_outer_quotes(t))
}

fn boolean_word(text: &str) -> Option<bool> {
    let t = text.trim().trim_end_matches(['.', '!']);
    let t = strip_outer_quotes(t.trim()).to_lowercase();
    match collapse_ws(&t).as_str() {
        "yes" | "true" | "executed" => Some(true),
        "no" | "false" | "not executed" => Some(false),
        _ => None,
    }
}

fn grade_boolean(gold: &str, answer: &str) -> Verdict {
    if gold.trim() == answer.trim() {
        return Verdict::new(true, GradeMethod::Exact, "");
    }
    match (boolean_word(gold), boolean_word(answer)) {
        (Some(g), Some(a)) => Verdict::new(g == a, GradeMethod::Normalized, ""),
        (Some(_), None) => Verdict::new(false, GradeMethod::Normalized, "UNRECOGNIZED_ANSWER"),
        // gold outside the boolean vocabulary: plain label comparison
        (None, _) => grade_label(gold, answer),
    }
}

fn grade_label(gold: &str, answer: &str) -> Verdict {
    if gold.trim() == answer.trim() {
        return Verdict::new(true, GradeMethod::Exact, "");
    }
    let g = collapse_ws(gold).to_lowercase();
    let a = collapse_ws(answer).to_lowercase();
    Verdict::new(g == a, GradeMethod::Normalized, "")
}

fn grade_literal(gold: &str, answer: &str) -> Verdict {
    if gold.trim() == answer.trim() {
        return Verdict::new(true, GradeMethod::Exact, "");
    }
    match (parse_literal(gold), parse_literal(answer)) {
        (Ok(g), Ok(a)) => Verdict::new(g == a, GradeMethod::Normalized, "literal"),
        _ => Verdict::new(
            surface(gold) == surface(answer),
            GradeMethod::Normalized,
            "text",
        ),
    }
}

fn grade_executed(point: &TestPoint, answer: &str, executor: &mut dyn Executor) -> Verdict {
    let task = match point.subtask {
        SubtaskKind::CruxO => ExecTask::new(&point.code, &point.question, answer),
        _ => ExecTask::new(&point.code, answer, &point.question),
    };
    match executor.evaluate(&task) {
        Ok(result) => match result.status {
            ExecStatus::Pass => Verdict::new(true, GradeMethod::Executed, ""),
            ExecStatus::Fail => Verdict::new(
                false,
                GradeMethod::Executed,
                format!("observed {}", result.observed.unwrap_or_default()),
            ),
            status => {
                log::debug!(
                    "{} {}: execution {:?}: {}",
                    point.subtask,
                    point.id,
                    status,
                    result.detail
                );
                Verdict::new(
                    false,
                    GradeMethod::Executed,
                    format!("{EXECUTION_ERROR}: {status:?} {}", result.detail)
                        .trim_end()
                        .to_string(),
                )
            }
        },
        Err(e) => {
            log::warn!("{} {}: executor failure: {e}", point.subtask, point.id);
            Verdict::new(
                false,
                GradeMethod::Executed,
                format!("{EXECUTION_ERROR}: {e}"),
            )
        }
    }
}

/// Grades `answer` against `point`.
///
/// Non-executed kinds are pure functions of their inputs. Executed kinds
/// need `executor`; an answer that cannot be verified grades incorrect.
pub fn grade(
    point: &TestPoint,
    answer: &str,
    executor: Option<&mut dyn Executor>,
) -> Result<Verdict, GradeError> {
    if point.subtask.is_executed() {
        let executor = executor.ok_or(GradeError::ExecutorUnavailable(point.subtask))?;
        return Ok(grade_executed(point, answer, executor));
    }
    let verdict = match (point.answer_format, point.subtask) {
        (AnswerFormat::Choice, _) | (_, SubtaskKind::Epp) => grade_label(&point.gold, answer),
        (_, SubtaskKind::Ccp) => grade_boolean(&point.gold, answer),
        _ => grade_literal(&point.gold, answer),
    };
    Ok(verdict)
}
