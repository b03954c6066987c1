use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use codecal_core::model::{
    read_run, Delta, EvaluationRun, ParseStatus, PromptStrategy, SubtaskKind,
};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn codecal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codecal"))
        .args(args)
        .current_dir(workspace())
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", stderr(out));
}

fn replay_args<'a>(benchmark: &'a str, cassette: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "run",
        "--benchmark",
        benchmark,
        "--model",
        "fixture-model",
        "--cassette",
        cassette,
        "--exec-table",
        "fixtures/executions.jsonl",
        "--out",
        out,
    ]
}

fn replay(out: &Path) -> Output {
    let out = out.to_str().unwrap();
    codecal(&replay_args(
        "fixtures/benchmark.json",
        "fixtures/cassette.jsonl",
        out,
    ))
}

fn full_run(dir: &Path) -> PathBuf {
    let out = dir.join("run.jsonl");
    assert_exit(&replay(&out), 0);
    out
}

#[test]
fn replay_covers_every_point_and_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let run = read_run(full_run(dir.path())).unwrap();
    assert_eq!(run.records.len(), 216);
    let mut per_kind: BTreeMap<SubtaskKind, usize> = BTreeMap::new();
    for r in run
        .records
        .iter()
        .filter(|r| r.strategy == PromptStrategy::Intrinsic)
    {
        *per_kind.entry(r.point.subtask).or_default() += 1;
    }
    assert_eq!(per_kind.len(), 6);
    assert!(per_kind.values().all(|&n| n >= 10), "{per_kind:?}");
    let graded = run
        .records
        .iter()
        .filter(|r| r.delta != Delta::Ungraded)
        .count();
    assert!(graded >= 210, "{graded} graded");
    assert!(run
        .records
        .iter()
        .any(|r| r.reasked && r.parse_status == ParseStatus::Ok));
    assert!(run.header.provenance.cassette_digest.is_some());
}

#[test]
fn replay_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = fs::read(full_run(a.path())).unwrap();
    let second = fs::read(full_run(b.path())).unwrap();
    assert_eq!(first, second);
}

#[test]
fn followers_of_an_unparseable_intrinsic_are_unparseable() {
    let dir = tempfile::tempdir().unwrap();
    let run = read_run(full_run(dir.path())).unwrap();
    let bad: Vec<_> = run
        .records
        .iter()
        .filter(|r| r.strategy == PromptStrategy::Intrinsic && r.parse_status != ParseStatus::Ok)
        .collect();
    assert!(!bad.is_empty());
    for intrinsic in bad {
        for r in run.records.iter().filter(|r| r.point == intrinsic.point) {
            assert_eq!(r.parse_status, ParseStatus::Unparseable);
            assert_eq!(r.delta, Delta::Ungraded);
        }
    }
}

#[test]
fn cassette_miss_is_a_data_error_naming_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let run = read_run(full_run(dir.path())).unwrap();
    let target = run
        .records
        .iter()
        .find(|r| r.record_id.ends_with("ccp-03/reflective"))
        .unwrap();
    let key = target.request_key.clone().unwrap();
    let original = fs::read_to_string(workspace().join("fixtures/cassette.jsonl")).unwrap();
    let pruned: String = original
        .lines()
        .filter(|l| !l.contains(&key))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(pruned.lines().count() + 1, original.lines().count());
    let cassette = dir.path().join("pruned.jsonl");
    fs::write(&cassette, pruned).unwrap();
    let out = dir.path().join("miss.jsonl");
    let result = codecal(&replay_args(
        "fixtures/benchmark.json",
        cassette.to_str().unwrap(),
        out.to_str().unwrap(),
    ));
    assert_exit(&result, 3);
    assert!(
        stderr(&result).contains(&target.record_id),
        "{}",
        stderr(&result)
    );
}

#[test]
fn interrupted_run_resumes_to_the_same_store() {
    let dir = tempfile::tempdir().unwrap();
    let full = full_run(dir.path());
    let complete = fs::read_to_string(&full).unwrap();
    let partial = dir.path().join("partial.jsonl");
    let head: String = complete
        .lines()
        .take(100)
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&partial, head).unwrap();
    assert_exit(&replay(&partial), 0);
    assert_eq!(fs::read_to_string(&partial).unwrap(), complete);
}

#[test]
fn store_of_another_run_is_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let full = full_run(dir.path());
    let before = fs::read(&full).unwrap();
    let mut args = replay_args(
        "fixtures/benchmark.json",
        "fixtures/cassette.jsonl",
        full.to_str().unwrap(),
    );
    args.extend(["--seed", "9"]);
    assert_exit(&codecal(&args), 3);
    assert_eq!(fs::read(&full).unwrap(), before);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let out = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "run",
            "--benchmark",
            "fixtures/benchmark.json",
            "--cassette",
            "fixtures/cassette.jsonl",
            "--out",
            out,
        ],
        vec![
            "run",
            "--benchmark",
            "fixtures/benchmark.json",
            "--model",
            "m",
            "--out",
            out,
        ],
        vec![
            "run",
            "--benchmark",
            "fixtures/benchmark.json",
            "--model",
            "m",
            "--mode",
            "record",
            "--cassette",
            "c.jsonl",
            "--out",
            out,
        ],
        vec![
            "run",
            "--benchmark",
            "fixtures/benchmark.json",
            "--model",
            "m",
            "--cassette",
            "fixtures/cassette.jsonl",
            "--executor",
            "python3 x.py",
            "--exec-table",
            "fixtures/executions.jsonl",
            "--out",
            out,
        ],
        vec![
            "run",
            "--benchmark",
            "fixtures/benchmark.json",
            "--model",
            "fixture-model",
            "--cassette",
            "fixtures/cassette.jsonl",
            "--out",
            out,
        ],
        vec!["calibrate"],
        vec!["report", "--out", out],
    ];
    for args in cases {
        let result = codecal(&args);
        assert_exit(&result, 2);
    }
    assert!(!Path::new(out).exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_exit(&codecal(&["run", "--mode", "sometimes"]), 2);
    assert_exit(&codecal(&["frobnicate"]), 2);
}

#[test]
fn missing_benchmark_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let args = replay_args(
        "fixtures/nope.json",
        "fixtures/cassette.jsonl",
        out.to_str().unwrap(),
    );
    assert_exit(&codecal(&args), 3);
}

/// Answers every request with HTTP 400.
fn rejecting_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            let _ = stream.write_all(
                b"HTTP/1.1 400 Bad Request\r\nContent-Length: 3\r\nConnection: close\r\n\r\nbad",
            );
        }
    });
    base
}

#[test]
fn rejected_request_is_a_transport_error() {
    let endpoint = rejecting_server();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("live.jsonl");
    let result = codecal(&[
        "run",
        "--benchmark",
        "fixtures/benchmark.json",
        "--subtasks",
        "CCP",
        "--model",
        "m",
        "--mode",
        "live",
        "--endpoint",
        &endpoint,
        "--workers",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&result, 4);
    assert!(stderr(&result).contains("400"), "{}", stderr(&result));
}

/// A benchmark named like the fixture one, holding a subset of its points.
fn subset_benchmark(dir: &Path, take: &[(SubtaskKind, usize)]) -> PathBuf {
    let all: Vec<serde_json::Value> = serde_json::from_str(
        &fs::read_to_string(workspace().join("fixtures/benchmark.json")).unwrap(),
    )
    .unwrap();
    let mut points = Vec::new();
    for &(kind, n) in take {
        points.extend(
            all.iter()
                .filter(|p| p["subtask"] == kind.to_string())
                .take(n)
                .cloned(),
        );
    }
    let sub = dir.join("subset");
    fs::create_dir_all(&sub).unwrap();
    let path = sub.join("benchmark.json");
    fs::write(&path, serde_json::to_string(&points).unwrap()).unwrap();
    path
}

fn subset_run(dir: &Path) -> PathBuf {
    let bench = subset_benchmark(dir, &[(SubtaskKind::Ccp, 4), (SubtaskKind::Epp, 12)]);
    let out = dir.join("subset.jsonl");
    let args = replay_args(
        bench.to_str().unwrap(),
        "fixtures/cassette.jsonl",
        out.to_str().unwrap(),
    );
    assert_exit(&codecal(&args), 0);
    out
}

fn calibrated(run: &EvaluationRun, kind: SubtaskKind) -> Vec<Option<f64>> {
    run.records
        .iter()
        .filter(|r| r.point.subtask == kind)
        .map(|r| r.calibrated_confidence)
        .collect()
}

#[test]
fn calibrate_skips_small_groups_and_fills_large_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = subset_run(dir.path());
    assert_exit(&codecal(&["calibrate", "--run", path.to_str().unwrap()]), 0);
    let run = read_run(&path).unwrap();
    assert!(calibrated(&run, SubtaskKind::Ccp)
        .iter()
        .all(Option::is_none));
    let epp = &run.records;
    for r in epp.iter().filter(|r| r.point.subtask == SubtaskKind::Epp) {
        assert_eq!(
            r.calibrated_confidence.is_some(),
            r.observation().is_some(),
            "{}",
            r.record_id
        );
    }
    let info = run.header.calibration.unwrap();
    let small: Vec<_> = info.groups.iter().filter(|g| !g.calibrated).collect();
    assert_eq!(small.len(), 3);
    assert!(small
        .iter()
        .all(|g| g.n == 4 && g.subtask == SubtaskKind::Ccp));
    for g in info.groups.iter().filter(|g| g.calibrated) {
        assert_eq!(g.fold_parameters.len(), 5);
    }
}

#[test]
fn calibration_depends_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let full = full_run(dir.path());
    let copies: Vec<PathBuf> = ["a", "b", "c"]
        .iter()
        .map(|n| dir.path().join(format!("{n}.jsonl")))
        .collect();
    for c in &copies {
        fs::copy(&full, c).unwrap();
    }
    let seeds = ["3", "3", "4"];
    for (c, seed) in copies.iter().zip(seeds) {
        assert_exit(
            &codecal(&["calibrate", "--run", c.to_str().unwrap(), "--seed", seed]),
            0,
        );
    }
    let bytes: Vec<Vec<u8>> = copies.iter().map(|c| fs::read(c).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_ne!(bytes[0], bytes[2]);
    // calibrating again replaces rather than compounds
    assert_exit(
        &codecal(&[
            "calibrate",
            "--run",
            copies[0].to_str().unwrap(),
            "--seed",
            "3",
        ]),
        0,
    );
    assert_eq!(fs::read(&copies[0]).unwrap(), bytes[1]);
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn report_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let run = full_run(dir.path());
    let run = run.to_str().unwrap();
    assert_exit(&codecal(&["calibrate", "--run", run]), 0);
    let outs: Vec<PathBuf> = ["table", "csv", "json"]
        .iter()
        .map(|f| dir.path().join(f))
        .collect();
    for (out, format) in outs.iter().zip(["table", "csv", "json"]) {
        let result = codecal(&[
            "report",
            "--run",
            run,
            "--format",
            format,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_exit(&result, 0);
    }

    let rows = csv_rows(&outs[1].join("metrics_raw.csv"));
    assert_eq!(rows.len(), 18);
    let table = fs::read_to_string(outs[0].join("metrics_raw.txt")).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outs[2].join("metrics.json")).unwrap()).unwrap();
    let groups = json["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 18);
    for row in &rows {
        let ece: f64 = row["ece"].parse().unwrap();
        let brier: f64 = row["brier"].parse().unwrap();
        let cells = format!("{ece:.3} {brier:.3}");
        let line = table
            .lines()
            .find(|l| l.contains(&format!("| {:<10} |", row["strategy"])))
            .unwrap();
        assert!(line.contains(&cells), "{cells} not in {line}");
        let group = groups
            .iter()
            .find(|g| {
                g["strategy"] == row["strategy"].as_str() && g["subtask"] == row["subtask"].as_str()
            })
            .unwrap();
        assert_eq!(group["raw"]["ece"].as_f64().unwrap(), ece);
        assert_eq!(group["raw"]["brier"].as_f64().unwrap(), brier);
    }

    let curves = fs::read_dir(outs[1].join("curves")).unwrap().count();
    let histograms = fs::read_dir(outs[1].join("histograms")).unwrap().count();
    assert_eq!(curves, 36);
    assert_eq!(histograms, 36);
    let curve = outs[1].join("curves/fixture-model__intrinsic__CCP__raw.csv");
    assert_eq!(fs::read_to_string(curve).unwrap().lines().count(), 11);
}

#[test]
fn uncalibrated_groups_report_as_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let path = subset_run(dir.path());
    assert_exit(&codecal(&["calibrate", "--run", path.to_str().unwrap()]), 0);
    let out = dir.path().join("report");
    let result = codecal(&[
        "report",
        "--run",
        path.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&result, 0);
    for row in csv_rows(&out.join("metrics_calibrated.csv")) {
        let undefined = row["subtask"] == "CCP";
        assert_eq!(row["ece"].is_empty(), undefined, "{row:?}");
    }
    assert!(!out
        .join("curves/fixture-model__intrinsic__CCP__calibrated.csv")
        .exists());
    assert!(out
        .join("curves/fixture-model__intrinsic__CCP__raw.csv")
        .exists());
}

#[test]
fn config_file_supplies_flags_and_the_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let ignored = dir.path().join("ignored.jsonl");
    let chosen = dir.path().join("chosen.jsonl");
    let config = dir.path().join("codecal.toml");
    fs::write(
        &config,
        format!(
            "[run]\nbenchmark = [\"fixtures/benchmark.json\"]\nmodel = \"fixture-model\"\n\
             cassette = \"fixtures/cassette.jsonl\"\nexec_table = \"fixtures/executions.jsonl\"\n\
             workers = 2\nout = {:?}\n\n[report]\nformat = \"json\"\nbins = 5\n",
            ignored.to_str().unwrap()
        ),
    )
    .unwrap();
    let config = config.to_str().unwrap();
    assert_exit(
        &codecal(&["--config", config, "run", "--out", chosen.to_str().unwrap()]),
        0,
    );
    assert!(chosen.exists());
    assert!(!ignored.exists());
    let run = read_run(&chosen).unwrap();
    assert_eq!(run.header.config.workers, 2);

    let report = dir.path().join("report");
    let result = codecal(&[
        "--config",
        config,
        "report",
        "--run",
        chosen.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_exit(&result, 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["bin_count"], 5);
}

#[test]
fn unknown_config_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[run]\nmodle = \"x\"\n").unwrap();
    let result = codecal(&["--config", config.to_str().unwrap(), "run"]);
    assert_exit(&result, 2);
    assert!(stderr(&result).contains("modle"), "{}", stderr(&result));
}

#[test]
fn subprocess_executor_grades_like_the_recorded_table() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let table_run = full_run(dir.path());
    let out = dir.path().join("subprocess.jsonl");
    let result = codecal(&[
        "run",
        "--benchmark",
        "fixtures/benchmark.json",
        "--subtasks",
        "CRUX_I,CRUX_O",
        "--model",
        "fixture-model",
        "--cassette",
        "fixtures/cassette.jsonl",
        "--executor",
        "python3 crates/core/tests/fixtures/stub_exec_grader.py",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&result, 0);
    let expected: BTreeMap<String, Delta> = read_run(&table_run)
        .unwrap()
        .records
        .into_iter()
        .map(|r| (r.record_id, r.delta))
        .collect();
    let run = read_run(&out).unwrap();
    assert_eq!(run.records.len(), 72);
    for r in run.records {
        assert_eq!(expected[&r.record_id], r.delta, "{}", r.record_id);
    }
}
