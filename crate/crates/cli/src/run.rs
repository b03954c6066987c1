//! The `run` command: elicit, parse, grade and record.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use codecal_core::grading::{
    grade, Executor, RecordedExecutor, SubprocessExecutor, GRADING_TABLE_VERSION,
};
use codecal_core::model::{
    load_benchmark, read_run, write_run, ConfidenceRecord, Delta, EvaluationRun, ParseStatus,
    PromptStrategy, Provenance, RunConfig, RunWriter, StoreError, SubtaskKind, TestPoint,
    UnparseableReason,
};
use codecal_core::prompting::{
    parse_elicitation, render_intrinsic, render_reask, render_reassess, render_reflective,
    ParsedElicitation, PromptBundle,
};
use codecal_gateway::{ChatRequest, Completion, Gateway, GatewayError};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExecutorSpec, RunPlan};
use crate::CliError;

/// Counts reported at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub run_id: String,
    pub points: usize,
    /// Points already complete in an earlier, interrupted run.
    pub resumed: usize,
    pub records: usize,
    pub unparseable: BTreeMap<PromptStrategy, usize>,
    pub reasked: usize,
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    config: &'a RunConfig,
    benchmark_digests: &'a BTreeMap<String, String>,
}

/// Stable id of a configuration over specific benchmark contents.
pub fn run_id(config: &RunConfig, benchmark_digests: &BTreeMap<String, String>) -> String {
    let canonical = serde_json::to_string(&RunIdentity {
        config,
        benchmark_digests,
    })
    .expect("config serializes");
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

fn load_points(config: &RunConfig) -> Result<(Vec<TestPoint>, BTreeMap<String, String>), CliError> {
    let filter: Option<BTreeSet<SubtaskKind>> = config
        .subtasks
        .as_ref()
        .map(|s| s.iter().copied().collect());
    let mut points = Vec::new();
    let mut digests = BTreeMap::new();
    let mut names = BTreeSet::new();
    for path in &config.benchmarks {
        let bench =
            load_benchmark(path, filter.as_ref()).map_err(|e| CliError::Data(e.to_string()))?;
        if !names.insert(bench.name.clone()) {
            return Err(CliError::Config(format!(
                "two benchmarks share the name `{}`; rename one file",
                bench.name
            )));
        }
        log::info!("{}: {} points {:?}", path, bench.points.len(), bench.counts);
        digests.insert(path.clone(), bench.digest);
        points.extend(bench.points);
    }
    Ok((points, digests))
}

fn make_executor(spec: &ExecutorSpec) -> Result<Option<Box<dyn Executor>>, CliError> {
    match spec {
        ExecutorSpec::None => Ok(None),
        ExecutorSpec::Command(argv) => SubprocessExecutor::spawn(argv)
            .map(|e| Some(Box::new(e) as Box<dyn Executor>))
            .map_err(|e| CliError::Config(e.to_string())),
        ExecutorSpec::Table(path) => RecordedExecutor::load(path)
            .map(|e| Some(Box::new(e) as Box<dyn Executor>))
            .map_err(|e| CliError::Data(e.to_string())),
    }
}

fn gateway_error(e: GatewayError, record_id: &str) -> CliError {
    match e {
        GatewayError::CassetteMiss { key } => {
            CliError::Data(format!("{record_id}: no cassette entry for request {key}"))
        }
        GatewayError::Transport { .. } => CliError::Transport(format!("{record_id}: {e}")),
        GatewayError::NotConfigured { .. } => CliError::Config(e.to_string()),
        GatewayError::Cassette(e) => CliError::Data(e.to_string()),
    }
}

struct Elicited {
    completion: Completion,
    parsed: Result<ParsedElicitation, UnparseableReason>,
    reasked: bool,
}

struct Worker<'a> {
    config: &'a RunConfig,
    gateway: &'a Gateway,
    executor: Option<Box<dyn Executor>>,
}

impl Worker<'_> {
    fn complete(&self, bundle: &PromptBundle, record_id: &str) -> Result<Completion, CliError> {
        let request = ChatRequest::new(
            self.config.model.clone(),
            bundle.messages.clone(),
            self.config.prompt_version.clone(),
        )
        .with_temperature(self.config.temperature)
        .with_max_tokens(self.config.max_tokens);
        self.gateway
            .complete(&request)
            .map_err(|e| gateway_error(e, record_id))
    }

    /// One call plus at most one format reminder.
    fn elicit(&self, bundle: &PromptBundle, record_id: &str) -> Result<Elicited, CliError> {
        let first = self.complete(bundle, record_id)?;
        if let Ok(parsed) = parse_elicitation(&first.text, bundle.expects) {
            return Ok(Elicited {
                completion: first,
                parsed: Ok(parsed),
                reasked: false,
            });
        }
        log::debug!("{record_id}: unparseable reply, re-asking");
        let retry = render_reask(bundle, &first.text);
        let second = self.complete(&retry, record_id)?;
        Ok(Elicited {
            parsed: parse_elicitation(&second.text, bundle.expects),
            completion: second,
            reasked: true,
        })
    }

    fn record(
        &self,
        point: &TestPoint,
        strategy: PromptStrategy,
        e: &Elicited,
    ) -> ConfidenceRecord {
        let point_ref = point.point_ref();
        let record_id = ConfidenceRecord::make_id(&point_ref, strategy);
        let (parse_status, unparseable_reason) = match &e.parsed {
            Ok(_) => (ParseStatus::Ok, None),
            Err(reason) => (ParseStatus::Unparseable, Some(*reason)),
        };
        ConfidenceRecord {
            record_id,
            model: self.config.model.clone(),
            strategy,
            intrinsic_ref: (strategy != PromptStrategy::Intrinsic)
                .then(|| ConfidenceRecord::make_id(&point_ref, PromptStrategy::Intrinsic)),
            point: point_ref,
            raw_response: e.completion.text.clone(),
            parsed_answer: e.parsed.as_ref().ok().and_then(|p| p.answer.clone()),
            confidence: e.parsed.as_ref().ok().map(|p| p.confidence),
            delta: Delta::Ungraded,
            parse_status,
            unparseable_reason,
            grade_method: None,
            grade_detail: None,
            reasked: e.reasked,
            request_key: Some(e.completion.request_key.clone()),
            responded_at: e.completion.recorded_at.clone(),
            calibrated_confidence: None,
        }
    }

    fn process(&mut self, point: &TestPoint) -> Result<Vec<ConfidenceRecord>, CliError> {
        let point_ref = point.point_ref();
        let intrinsic_id = ConfidenceRecord::make_id(&point_ref, PromptStrategy::Intrinsic);
        let elicited = self.elicit(&render_intrinsic(point), &intrinsic_id)?;
        let mut intrinsic = self.record(point, PromptStrategy::Intrinsic, &elicited);
        if let Some(answer) = intrinsic.parsed_answer.clone() {
            let executor = self
                .executor
                .as_mut()
                .map(|e| e.as_mut() as &mut dyn Executor);
            let verdict = grade(point, &answer, executor)
                .map_err(|e| CliError::Config(format!("{intrinsic_id}: {e}")))?;
            intrinsic.delta = verdict.delta();
            intrinsic.grade_method = Some(verdict.method);
            intrinsic.grade_detail = (!verdict.detail.is_empty()).then_some(verdict.detail);
        }

        let mut records = vec![intrinsic];
        for &strategy in self
            .config
            .strategies
            .iter()
            .filter(|s| **s != PromptStrategy::Intrinsic)
        {
            let intrinsic = &records[0];
            let record_id = ConfidenceRecord::make_id(&point_ref, strategy);
            if intrinsic.parse_status != ParseStatus::Ok {
                records.push(ConfidenceRecord {
                    record_id,
                    strategy,
                    intrinsic_ref: Some(intrinsic.record_id.clone()),
                    raw_response: String::new(),
                    parsed_answer: None,
                    confidence: None,
                    delta: Delta::Ungraded,
                    parse_status: ParseStatus::Unparseable,
                    unparseable_reason: Some(UnparseableReason::IntrinsicUnparseable),
                    grade_method: None,
                    grade_detail: None,
                    reasked: false,
                    request_key: None,
                    ..intrinsic.clone()
                });
                continue;
            }
            let bundle = match strategy {
                PromptStrategy::Reassess => render_reassess(point, intrinsic),
                _ => render_reflective(point, intrinsic),
            }
            .map_err(|e| CliError::Data(e.to_string()))?;
            let elicited = self.elicit(&bundle, &record_id)?;
            let mut record = self.record(point, strategy, &elicited);
            // the answer under judgement is the intrinsic one
            record.parsed_answer = intrinsic.parsed_answer.clone();
            if record.parse_status == ParseStatus::Ok {
                record.delta = intrinsic.delta;
                record.grade_method = intrinsic.grade_method;
                record.grade_detail = intrinsic.grade_detail.clone();
            }
            records.push(record);
        }
        Ok(records)
    }
}

fn strategy_rank(s: PromptStrategy) -> usize {
    PromptStrategy::ALL
        .iter()
        .position(|x| *x == s)
        .unwrap_or(usize::MAX)
}

/// Records already present in a store of the same run, by point reference.
fn resumable(out: &Path, run_id: &str) -> Result<Option<EvaluationRun>, CliError> {
    if !out.exists() {
        return Ok(None);
    }
    let existing = read_run(out).map_err(|e| CliError::Data(e.to_string()))?;
    if existing.header.run_id != run_id {
        return Err(CliError::Data(format!(
            "{} holds run {} but this configuration is run {run_id}; choose another --out",
            out.display(),
            existing.header.run_id
        )));
    }
    Ok(Some(existing))
}

fn store_error(e: StoreError) -> CliError {
    CliError::Data(e.to_string())
}

/// Executes a run against `gateway`, resuming from `plan.out` when it holds
/// a partial store of the same run.
pub fn execute_run(plan: &RunPlan, gateway: &Gateway) -> Result<RunSummary, CliError> {
    let config = &plan.config;
    let (points, digests) = load_points(config)?;
    if points.iter().any(|p| p.subtask.is_executed()) && plan.executor == ExecutorSpec::None {
        return Err(CliError::Config(
            "CRUX points need --executor or --exec-table".into(),
        ));
    }
    let id = run_id(config, &digests);
    let provenance = Provenance {
        benchmark_digests: digests,
        cassette_digest: gateway.cassette_digest(),
        grading_table_version: GRADING_TABLE_VERSION.into(),
    };
    let mut run = EvaluationRun::new(id.clone(), config.clone(), provenance);

    let existing = resumable(&plan.out, &id)?;
    let mut done: HashMap<String, Vec<ConfidenceRecord>> = HashMap::new();
    if let Some(existing) = &existing {
        for r in &existing.records {
            done.entry(format!("{:?}", r.point))
                .or_default()
                .push(r.clone());
        }
    }
    let expected = config.strategies.len();
    let complete_points: BTreeSet<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            done.get(&format!("{:?}", p.point_ref()))
                .is_some_and(|r| r.len() == expected)
        })
        .map(|(i, _)| i)
        .collect();
    let todo: Vec<usize> = (0..points.len())
        .filter(|i| !complete_points.contains(i))
        .collect();
    let mut summary = RunSummary {
        run_id: id.clone(),
        points: points.len(),
        resumed: complete_points.len(),
        ..Default::default()
    };
    if let Some(existing) = existing.as_ref().filter(|_| todo.is_empty()) {
        log::info!("{} is already complete", plan.out.display());
        tally(&mut summary, &existing.records);
        return Ok(summary);
    }
    if !complete_points.is_empty() {
        log::info!(
            "resuming: {} of {} points already done",
            complete_points.len(),
            points.len()
        );
    }

    if let Some(dir) = plan.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut writer = match existing {
        Some(_) => RunWriter::append_to(&plan.out),
        None => RunWriter::create(&plan.out, &run.header),
    }
    .map_err(store_error)?;

    let mut fresh: BTreeMap<usize, Vec<ConfidenceRecord>> = BTreeMap::new();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = config.workers.min(todo.len()).max(1);
    let mut failure: Option<CliError> = None;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<ConfidenceRecord>, CliError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, todo, points) = (&next, &stop, &todo, &points);
            scope.spawn(move || {
                let executor = match make_executor(&plan.executor) {
                    Ok(e) => e,
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        let _ = tx.send((usize::MAX, Err(e)));
                        return;
                    }
                };
                let mut worker = Worker {
                    config,
                    gateway,
                    executor,
                };
                while !stop.load(Ordering::SeqCst) {
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&index) = todo.get(slot) else { break };
                    let result = worker.process(&points[index]);
                    if result.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if tx.send((slot, result)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        // commit in point order so the file grows deterministically
        let mut pending: BTreeMap<usize, Vec<ConfidenceRecord>> = BTreeMap::new();
        let mut next_commit = 0;
        for (slot, result) in rx {
            match result {
                Ok(records) => {
                    pending.insert(slot, records);
                }
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(e);
                    }
                    continue;
                }
            }
            while let Some(records) = pending.remove(&next_commit) {
                if failure.is_none() {
                    for r in &records {
                        if let Err(e) = writer.append(r) {
                            failure = Some(store_error(e));
                            stop.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                }
                fresh.insert(todo[next_commit], records);
                next_commit += 1;
                if next_commit % 25 == 0 || next_commit == todo.len() {
                    log::info!("{}/{} points answered", next_commit, todo.len());
                }
            }
        }
    });
    drop(writer);
    if let Some(e) = failure {
        return Err(e);
    }

    for (i, point) in points.iter().enumerate() {
        let records = match fresh.remove(&i) {
            Some(records) => records,
            None => done
                .remove(&format!("{:?}", point.point_ref()))
                .unwrap_or_default(),
        };
        let mut records = records;
        records.sort_by_key(|r| strategy_rank(r.strategy));
        run.records.extend(records);
    }
    write_run(&plan.out, &run).map_err(store_error)?;
    tally(&mut summary, &run.records);
    Ok(summary)
}

fn tally(summary: &mut RunSummary, records: &[ConfidenceRecord]) {
    summary.records = records.len();
    for r in records {
        if r.parse_status == ParseStatus::Unparseable {
            *summary.unparseable.entry(r.strategy).or_default() += 1;
        }
        if r.reasked {
            summary.reasked += 1;
        }
    }
}
