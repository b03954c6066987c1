use codecal_core::model::{
    read_run, write_run, CalibrationGroup, CalibrationInfo, CallMode, ConfidenceRecord, Delta,
    EvaluationRun, GradeMethod, ParseStatus, PointRef, PromptStrategy, Provenance, RunConfig,
    SubtaskKind, UnparseableReason,
};
use proptest::prelude::*;

fn config(seed: u64) -> RunConfig {
    RunConfig {
        benchmarks: vec!["fixtures/benchmark.json".into()],
        subtasks: Some(vec![SubtaskKind::Ccp, SubtaskKind::CruxI]),
        model: "org/model".into(),
        endpoint: Some("http://localhost:8000/v1".into()),
        api_key_env: "API_KEY".into(),
        strategies: PromptStrategy::ALL.to_vec(),
        temperature: 0.0,
        max_tokens: Some(512),
        seed,
        mode: CallMode::Replay,
        cassette: Some("calls.jsonl".into()),
        workers: 4,
        prompt_version: "v1".into(),
    }
}

#[derive(Debug, Clone)]
struct Spec {
    subtask: usize,
    confidence: Option<f64>,
    correct: bool,
    calibrated: Option<f64>,
    text: String,
    followers: bool,
}

fn spec() -> impl Strategy<Value = Spec> {
    (
        0..6usize,
        proptest::option::weighted(0.85, 0.0..=1.0f64),
        any::<bool>(),
        proptest::option::of(0.0..=1.0f64),
        "\\PC{0,40}",
        any::<bool>(),
    )
        .prop_map(
            |(subtask, confidence, correct, calibrated, text, followers)| Spec {
                subtask,
                confidence,
                correct,
                calibrated,
                text,
                followers,
            },
        )
}

fn record(i: usize, s: &Spec, strategy: PromptStrategy) -> ConfidenceRecord {
    let point = PointRef {
        benchmark: "benchmark".into(),
        subtask: SubtaskKind::ALL[s.subtask],
        id: format!("p{i}"),
    };
    let ok = s.confidence.is_some();
    ConfidenceRecord {
        record_id: ConfidenceRecord::make_id(&point, strategy),
        model: "org/model".into(),
        strategy,
        intrinsic_ref: (strategy != PromptStrategy::Intrinsic)
            .then(|| ConfidenceRecord::make_id(&point, PromptStrategy::Intrinsic)),
        point,
        raw_response: format!("{}\n{{\"answer\": 1}}", s.text),
        parsed_answer: ok.then(|| s.text.clone()),
        confidence: s.confidence,
        delta: if ok {
            Delta::from_correct(s.correct)
        } else {
            Delta::Ungraded
        },
        parse_status: if ok {
            ParseStatus::Ok
        } else {
            ParseStatus::Unparseable
        },
        unparseable_reason: (!ok).then_some(UnparseableReason::OutOfRange),
        grade_method: ok.then_some(GradeMethod::Normalized),
        grade_detail: ok.then(|| s.text.clone()),
        reasked: !s.correct,
        request_key: Some(format!("{i:064x}")),
        responded_at: "2026-01-02T03:04:05.678Z".into(),
        calibrated_confidence: s.calibrated.filter(|_| ok),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_is_identity(specs in prop::collection::vec(spec(), 0..25), seed in any::<u64>()) {
        let mut provenance = Provenance {
            grading_table_version: "1".into(),
            ..Default::default()
        };
        provenance.benchmark_digests.insert("fixtures/benchmark.json".into(), "ab".repeat(32));
        let mut run = EvaluationRun::new(format!("run-{seed}"), config(seed), provenance);
        if seed % 2 == 0 {
            run.header.calibration = Some(CalibrationInfo {
                seed,
                smoothing: true,
                groups: vec![CalibrationGroup {
                    model: "org/model".into(),
                    strategy: PromptStrategy::Reassess,
                    subtask: SubtaskKind::Op,
                    n: 12,
                    calibrated: true,
                    fold_parameters: vec![(1.25, -0.1); 5],
                }],
            });
        }
        for (i, s) in specs.iter().enumerate() {
            run.records.push(record(i, s, PromptStrategy::Intrinsic));
            if s.followers {
                run.records.push(record(i, s, PromptStrategy::Reassess));
                run.records.push(record(i, s, PromptStrategy::Reflective));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        write_run(&path, &run).unwrap();
        let back = read_run(&path).unwrap();
        prop_assert_eq!(&back, &run);
        let first = std::fs::read(&path).unwrap();
        write_run(&path, &back).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
