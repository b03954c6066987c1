//! Confidence-elicitation prompts and response parsing.
//!
//! Templates live under `templates/<version>/` and use `{{name}}`
//! placeholders. Every kind fills `task`, `code`, `question_label`,
//! `question` and `answer_hint`; the reassess and reflective templates also
//! take `answer`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    AnswerFormat, ConfidenceRecord, ParseStatus, PromptStrategy, SubtaskKind, TestPoint,
    UnparseableReason,
};

/// Version tag of the bundled templates; recorded in every run config.
pub const PROMPT_VERSION: &str = "v1";

mod templates {
    pub const SYSTEM: &str = include_str!("../templates/v1/system.txt");
    pub const INTRINSIC: &str = include_str!("../templates/v1/intrinsic.txt");
    pub const REASSESS: &str = include_str!("../templates/v1/reassess.txt");
    pub const REFLECTIVE_SYSTEM: &str = include_str!("../templates/v1/reflective_system.txt");
    pub const REFLECTIVE: &str = include_str!("../templates/v1/reflective.txt");
    pub const REMINDER_ANSWER: &str = include_str!("../templates/v1/reminder_answer.txt");
    pub const REMINDER_CONFIDENCE: &str = include_str!("../templates/v1/reminder_confidence.txt");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// What the final JSON object of a reply must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ElicitationMode {
    AnswerAndConfidence,
    ConfidenceOnly,
}

/// A rendered conversation ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: PromptStrategy,
    pub messages: Vec<ChatMessage>,
    pub expects: ElicitationMode,
}

impl PromptBundle {
    /// All message text joined, for inspection.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("cannot build a {strategy} prompt from record {record_id}: the intrinsic response was unparseable")]
    CannotReassess {
        strategy: PromptStrategy,
        record_id: String,
    },
}

struct KindWording {
    task: &'static str,
    question_label: &'static str,
    answer_hint: &'static str,
}

fn wording(kind: SubtaskKind) -> KindWording {
    match kind {
        SubtaskKind::Ccp => KindWording {
            task: "Decide whether the statement identified below is reached (runs at least once) when the program runs on the given input.",
            question_label: "Input and target statement",
            answer_hint: "Use a JSON boolean for \"answer\".",
        },
        SubtaskKind::Psp => KindWording {
            task: "Determine the type and value of the specified variable at the indicated point when the program runs on the given input.",
            question_label: "Input, location and variable",
            answer_hint: "Give \"answer\" as a Python literal of the variable's value.",
        },
        SubtaskKind::Epp => KindWording {
            task: "The program is paused at the breakpoint given below while running on the given input. Identify the statement that runs next.",
            question_label: "Input and breakpoint",
            answer_hint: "Give \"answer\" as the source text of that statement.",
        },
        SubtaskKind::Op => KindWording {
            task: "Predict the output of the program when it runs on the given input.",
            question_label: "Input",
            answer_hint: "Give \"answer\" as a Python literal of the output.",
        },
        SubtaskKind::CruxI => KindWording {
            task: "Given the output of the function, find a possible input to the function that produces this output.",
            question_label: "Output",
            answer_hint: "Give \"answer\" as the argument list exactly as it would appear between the parentheses of the call.",
        },
        SubtaskKind::CruxO => KindWording {
            task: "Given the input to the function, predict the output of the function.",
            question_label: "Input",
            answer_hint: "Give \"answer\" as a Python literal of the return value.",
        },
    }
}

const CHOICE_HINT: &str = "Give \"answer\" as the label of the chosen option.";

/// Substitutes `{{name}}` placeholders in one pass, so substituted text is
/// never re-scanned. Unknown placeholders are left as-is.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let template = template.trim_end();
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn point_vars<'a>(point: &'a TestPoint, w: &'a KindWording) -> Vec<(&'static str, &'a str)> {
    let hint = match point.answer_format {
        AnswerFormat::Choice => CHOICE_HINT,
        AnswerFormat::Literal => w.answer_hint,
    };
    vec![
        ("task", w.task),
        ("code", point.code.as_str()),
        ("question_label", w.question_label),
        ("question", point.question.as_str()),
        ("answer_hint", hint),
    ]
}

/// First-turn prompt asking for an answer and a confidence.
pub fn render_intrinsic(point: &TestPoint) -> PromptBundle {
    let w = wording(point.subtask);
    PromptBundle {
        strategy: PromptStrategy::Intrinsic,
        messages: vec![
            ChatMessage::new(Role::System, templates::SYSTEM.trim_end()),
            ChatMessage::new(
                Role::User,
                fill(templates::INTRINSIC, &point_vars(point, &w)),
            ),
        ],
        expects: ElicitationMode::AnswerAndConfidence,
    }
}

fn intrinsic_answer(
    intrinsic: &ConfidenceRecord,
    strategy: PromptStrategy,
) -> Result<&str, PromptError> {
    match (&intrinsic.parse_status, &intrinsic.parsed_answer) {
        (ParseStatus::Ok, Some(answer)) => Ok(answer),
        _ => Err(PromptError::CannotReassess {
            strategy,
            record_id: intrinsic.record_id.clone(),
        }),
    }
}

/// Continues the intrinsic conversation with a self-doubt instruction and
/// asks for a fresh confidence only.
pub fn render_reassess(
    point: &TestPoint,
    intrinsic: &ConfidenceRecord,
) -> Result<PromptBundle, PromptError> {
    let answer = intrinsic_answer(intrinsic, PromptStrategy::Reassess)?;
    let mut messages = render_intrinsic(point).messages;
    messages.push(ChatMessage::new(
        Role::Assistant,
        intrinsic.raw_response.clone(),
    ));
    messages.push(ChatMessage::new(
        Role::User,
        fill(templates::REASSESS, &[("answer", answer)]),
    ));
    Ok(PromptBundle {
        strategy: PromptStrategy::Reassess,
        messages,
        expects: ElicitationMode::ConfidenceOnly,
    })
}

/// Fresh evaluator context: question plus candidate answer, no history.
pub fn render_reflective(
    point: &TestPoint,
    intrinsic: &ConfidenceRecord,
) -> Result<PromptBundle, PromptError> {
    let answer = intrinsic_answer(intrinsic, PromptStrategy::Reflective)?;
    let w = wording(point.subtask);
    let mut vars = point_vars(point, &w);
    vars.push(("answer", answer));
    Ok(PromptBundle {
        strategy: PromptStrategy::Reflective,
        messages: vec![
            ChatMessage::new(Role::System, templates::REFLECTIVE_SYSTEM.trim_end()),
            ChatMessage::new(Role::User, fill(templates::REFLECTIVE, &vars)),
        ],
        expects: ElicitationMode::ConfidenceOnly,
    })
}

/// Appends the unparseable reply and a format reminder.
pub fn render_reask(bundle: &PromptBundle, reply: &str) -> PromptBundle {
    let reminder = match bundle.expects {
        ElicitationMode::AnswerAndConfidence => templates::REMINDER_ANSWER,
        ElicitationMode::ConfidenceOnly => templates::REMINDER_CONFIDENCE,
    };
    let mut messages = bundle.messages.clone();
    messages.push(ChatMessage::new(Role::Assistant, reply));
    messages.push(ChatMessage::new(Role::User, reminder.trim_end()));
    PromptBundle {
        strategy: bundle.strategy,
        messages,
        expects: bundle.expects,
    }
}

/// Answer and confidence extracted from a reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedElicitation {
    /// Absent in confidence-only mode.
    pub answer: Option<String>,
    pub confidence_raw: u8,
    /// `confidence_raw / 100`.
    pub confidence: f64,
}

/// Top-level JSON objects in `text`, in order of appearance.
fn json_objects(text: &str) -> Vec<serde_json::Map<String, Value>> {
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(offset) = text[i..].find('{') {
        let start = i + offset;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                found.push(map);
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    found
}

fn answer_text(value: &Value) -> Option<String> {
    let text = match value {
        Value::Null => return None,
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    (!text.trim().is_empty()).then_some(text)
}

fn confidence_value(value: &Value) -> Result<u8, UnparseableReason> {
    let Value::Number(n) = value else {
        return Err(UnparseableReason::NonInteger);
    };
    let whole = if let Some(u) = n.as_u64() {
        u as f64
    } else if let Some(i) = n.as_i64() {
        i as f64
    } else {
        let f = n.as_f64().ok_or(UnparseableReason::NonInteger)?;
        if f.fract() != 0.0 {
            return Err(UnparseableReason::NonInteger);
        }
        f
    };
    if (0.0..=100.0).contains(&whole) {
        Ok(whole as u8)
    } else {
        Err(UnparseableReason::OutOfRange)
    }
}

/// Reads the last well-formed JSON object of `response`.
///
/// Out-of-range confidences are rejected, never clamped.
pub fn parse_elicitation(
    response: &str,
    mode: ElicitationMode,
) -> Result<ParsedElicitation, UnparseableReason> {
    let object = json_objects(response)
        .pop()
        .ok_or(UnparseableReason::NoJson)?;
    let answer = match mode {
        ElicitationMode::AnswerAndConfidence => Some(
            object
                .get("answer")
                .and_then(answer_text)
                .ok_or(UnparseableReason::MissingField)?,
        ),
        ElicitationMode::ConfidenceOnly => None,
    };
    let raw = confidence_value(
        object
            .get("confidence")
            .ok_or(UnparseableReason::MissingField)?,
    )?;
    Ok(ParsedElicitation {
        answer,
        confidence_raw: raw,
        confidence: f64::from(raw) / 100.0,
    })
}
