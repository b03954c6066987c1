//! Records `fixtures/cassette.jsonl` by running the pipeline in record mode
//! against a scripted, overconfident fake model.
//!
//! The script draws correctness and confidences from a seeded RNG and
//! injects a few malformed replies so the re-ask and unparseable paths are
//! covered on replay.
//!
//! ```text
//! cargo run -p codecal-cli --example record_fixture_cassette
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use codecal_cli::config::{ExecutorSpec, RunPlan};
use codecal_cli::run::execute_run;
use codecal_core::model::{
    load_benchmark, CallMode, ConfidenceRecord, Delta, ParseStatus, PromptStrategy, RunConfig,
    SubtaskKind, TestPoint,
};
use codecal_core::prompting::{render_intrinsic, render_reask, render_reflective, PROMPT_VERSION};
use codecal_gateway::{Cassette, ChatRequest, Gateway, Transport, TransportError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODEL: &str = "fixture-model";
const SEED: u64 = 2024;

fn accuracy(kind: SubtaskKind) -> f64 {
    match kind {
        SubtaskKind::Ccp => 0.8,
        SubtaskKind::Psp => 0.6,
        SubtaskKind::Epp => 0.65,
        SubtaskKind::Op => 0.55,
        SubtaskKind::CruxI => 0.5,
        SubtaskKind::CruxO => 0.6,
    }
}

/// Everything the fake says about one point.
struct Script {
    answer: String,
    intrinsic: u8,
    reassess: u8,
    reflective: u8,
    index: usize,
}

impl Script {
    fn draw(
        index: usize,
        point: &TestPoint,
        right: &str,
        wrong: &str,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let correct = rng.random_bool(accuracy(point.subtask));
        let intrinsic = if correct {
            rng.random_range(15..=20u8) * 5
        } else {
            rng.random_range(12..=20u8) * 5
        };
        let reassess = intrinsic.saturating_sub(rng.random_range(0..=5u8) * 5);
        let reflective = if correct {
            rng.random_range(13..=19u8) * 5
        } else {
            rng.random_range(7..=17u8) * 5
        };
        Script {
            answer: if correct { right } else { wrong }.to_string(),
            intrinsic,
            reassess,
            reflective,
            index,
        }
    }

    fn answer_json(&self, kind: SubtaskKind) -> serde_json::Value {
        match (kind, self.answer.as_str()) {
            (SubtaskKind::Ccp, "yes") => true.into(),
            (SubtaskKind::Ccp, "no") => false.into(),
            (_, text) => match text.parse::<i64>() {
                Ok(n) if self.index.is_multiple_of(2) => n.into(),
                _ => text.into(),
            },
        }
    }

    /// The answer as the parser will read it back.
    fn parsed_answer(&self, kind: SubtaskKind) -> String {
        match self.answer_json(kind) {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        }
    }

    fn intrinsic_reply(&self, kind: SubtaskKind, reasked: bool) -> String {
        let i = self.index;
        if i == 41 {
            return if reasked {
                format!("{{\"answer\": {}}}", self.answer_json(kind))
            } else {
                "Tracing the loop by hand, I lose track of the state.".into()
            };
        }
        if i % 13 == 5 && !reasked {
            return format!("I believe the answer is {}.", self.answer);
        }
        let object =
            serde_json::json!({"answer": self.answer_json(kind), "confidence": self.intrinsic});
        format!("Walking through the code step by step gives the result.\n{object}")
    }

    fn reassess_reply(&self, reasked: bool) -> String {
        if self.index % 17 == 8 && !reasked {
            return "{\"confidence\": \"high\"}".into();
        }
        format!(
            "On reflection I am less sure.\n{{\"confidence\": {}}}",
            self.reassess
        )
    }

    fn reflective_reply(&self) -> String {
        if self.index == 23 {
            return "{\"confidence\": 120}".into();
        }
        if self.index % 19 == 2 {
            return format!("{{\"confidence\": {}.0}}", self.reflective);
        }
        format!(
            "The candidate answer looks plausible.\n{{\"confidence\": {}}}",
            self.reflective
        )
    }
}

fn intrinsic_stub(point: &TestPoint, answer: &str) -> ConfidenceRecord {
    let point_ref = point.point_ref();
    ConfidenceRecord {
        record_id: ConfidenceRecord::make_id(&point_ref, PromptStrategy::Intrinsic),
        model: MODEL.into(),
        strategy: PromptStrategy::Intrinsic,
        point: point_ref,
        intrinsic_ref: None,
        raw_response: String::new(),
        parsed_answer: Some(answer.into()),
        confidence: None,
        delta: Delta::Ungraded,
        parse_status: ParseStatus::Ok,
        unparseable_reason: None,
        grade_method: None,
        grade_detail: None,
        reasked: false,
        request_key: None,
        responded_at: String::new(),
        calibrated_confidence: None,
    }
}

struct FakeModel {
    points: Vec<TestPoint>,
    scripts: Vec<Script>,
    /// First user message of the intrinsic prompt, by point.
    intrinsic: HashMap<String, usize>,
    /// First user message of the reflective prompt, by point.
    reflective: HashMap<String, usize>,
}

impl FakeModel {
    fn reply(&self, request: &ChatRequest) -> Option<String> {
        let m = &request.messages;
        let opening = &m.get(1)?.content;
        if let Some(&i) = self.intrinsic.get(opening) {
            let (point, script) = (&self.points[i], &self.scripts[i]);
            return Some(match m.len() {
                2 => script.intrinsic_reply(point.subtask, false),
                4 => {
                    let reask = render_reask(&render_intrinsic(point), &m[2].content);
                    if reask.messages[3] == m[3] {
                        script.intrinsic_reply(point.subtask, true)
                    } else {
                        script.reassess_reply(false)
                    }
                }
                6 => script.reassess_reply(true),
                _ => return None,
            });
        }
        let &i = self.reflective.get(opening)?;
        Some(self.scripts[i].reflective_reply())
    }
}

impl Transport for FakeModel {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.reply(request)
            .ok_or_else(|| TransportError::Decode("request not covered by the script".into()))
    }
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let benchmark = root.join("benchmark.json");
    let answers: HashMap<String, HashMap<String, String>> =
        serde_json::from_str(&fs::read_to_string(root.join("answers.json")).expect("answers.json"))
            .expect("answers.json parses");
    let bench = load_benchmark(&benchmark, None).expect("benchmark loads");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut fake = FakeModel {
        points: bench.points.clone(),
        scripts: Vec::new(),
        intrinsic: HashMap::new(),
        reflective: HashMap::new(),
    };
    for (i, point) in bench.points.iter().enumerate() {
        let pair = &answers[&format!("{}/{}", point.subtask, point.id)];
        let script = Script::draw(i, point, &pair["right"], &pair["wrong"], &mut rng);
        let stub = intrinsic_stub(point, &script.parsed_answer(point.subtask));
        fake.intrinsic
            .insert(render_intrinsic(point).messages[1].content.clone(), i);
        fake.reflective.insert(
            render_reflective(point, &stub)
                .expect("stub parses")
                .messages[1]
                .content
                .clone(),
            i,
        );
        fake.scripts.push(script);
    }

    let cassette_path = root.join("cassette.jsonl");
    let _ = fs::remove_file(&cassette_path);
    let scratch = tempfile::tempdir().expect("temp dir");
    let plan = RunPlan {
        config: RunConfig {
            benchmarks: vec![benchmark.to_string_lossy().into_owned()],
            subtasks: None,
            model: MODEL.into(),
            endpoint: Some("http://fake.invalid/v1".into()),
            api_key_env: "OPENAI_API_KEY".into(),
            strategies: PromptStrategy::ALL.to_vec(),
            temperature: 0.0,
            max_tokens: None,
            seed: 0,
            mode: CallMode::Record,
            cassette: Some(cassette_path.to_string_lossy().into_owned()),
            workers: 1,
            prompt_version: PROMPT_VERSION.into(),
        },
        out: scratch.path().join("run.jsonl"),
        executor: ExecutorSpec::Table(root.join("executions.jsonl")),
        timeout: Duration::from_secs(5),
    };
    let cassette = Cassette::open_for_append(&cassette_path).expect("cassette opens");
    let gateway = Gateway::record(Box::new(fake), cassette);
    let summary = execute_run(&plan, &gateway).expect("run succeeds");
    println!(
        "recorded {} requests for {} records ({} re-asked, unparseable {:?})",
        Cassette::open_read_only(&cassette_path)
            .expect("reopen")
            .len(),
        summary.records,
        summary.reasked,
        summary.unparseable
    );
}
