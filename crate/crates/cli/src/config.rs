//! Command-line flags and the TOML file that can stand in for them.
//!
//! Every flag of a subcommand may also be given in the config file under a
//! table named after the subcommand, with `-` in flag names written as `_`.
//! Flags on the command line win over the file.
//!
//! ```toml
//! [run]
//! benchmark = ["data/reval.json", "data/cruxeval.json"]
//! model = "deepseek-chat"
//! endpoint = "https://api.deepseek.com/v1"
//! api_key_env = "DEEPSEEK_API_KEY"
//! strategies = ["intrinsic", "reassess", "reflective"]
//! mode = "record"
//! cassette = "cassettes/deepseek-chat.jsonl"
//! seed = 7
//! workers = 8
//! executor = "python3 -m exec_grader"
//! out = "runs/deepseek-chat.jsonl"
//!
//! [calibrate]
//! seed = 7
//!
//! [report]
//! format = "csv"
//! out = "reports/"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codecal_core::model::{CallMode, PromptStrategy, RunConfig, SubtaskKind};
use codecal_core::prompting::PROMPT_VERSION;
use codecal_core::report::DEFAULT_BIN_COUNT;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_WORKERS: usize = 4;
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Parser)]
#[command(
    name = "codecal",
    version,
    about = "Confidence reliability of LLMs on code reasoning tasks"
)]
pub struct Cli {
    /// TOML file supplying values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Elicit answers and confidences, grade them and write a run store.
    Run(RunArgs),
    /// Add cross-validated Platt-scaled confidences to a run store.
    Calibrate(CalibrateArgs),
    /// Render metric tables and plot data from run stores.
    Report(ReportArgs),
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// Benchmark ingestion file; repeat for several.
    #[arg(long, value_name = "PATH")]
    pub benchmark: Vec<PathBuf>,
    /// Only these subtasks (comma separated labels).
    #[arg(long, value_delimiter = ',')]
    pub subtasks: Vec<SubtaskKind>,
    #[arg(long)]
    pub model: Option<String>,
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Comma separated; intrinsic always runs.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<PromptStrategy>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// live, record or replay.
    #[arg(long)]
    pub mode: Option<CallMode>,
    #[arg(long, value_name = "FILE")]
    pub cassette: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Command starting an exec-grader, split on whitespace.
    #[arg(long, value_name = "CMD")]
    pub executor: Option<String>,
    /// JSONL table of recorded executions, used instead of an exec-grader.
    #[arg(long, value_name = "FILE")]
    pub exec_table: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    /// Fold seed; defaults to the run's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit on raw 0/1 targets instead of smoothed ones.
    #[arg(long)]
    #[serde(skip)]
    pub no_smoothing: bool,
    #[arg(skip)]
    pub smoothing: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// Run store; repeat to combine several.
    #[arg(long, value_name = "FILE")]
    pub run: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Bins of the reliability curves and histograms.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunArgs,
    pub calibrate: CalibrateArgs,
    pub report: ReportArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn pick<T>(cli: Option<T>, file: Option<T>) -> Option<T> {
    cli.or(file)
}

fn pick_vec<T>(cli: Vec<T>, file: Vec<T>) -> Vec<T> {
    if cli.is_empty() {
        file
    } else {
        cli
    }
}

impl RunArgs {
    pub fn merged(self, file: RunArgs) -> RunArgs {
        RunArgs {
            benchmark: pick_vec(self.benchmark, file.benchmark),
            subtasks: pick_vec(self.subtasks, file.subtasks),
            model: pick(self.model, file.model),
            endpoint: pick(self.endpoint, file.endpoint),
            api_key_env: pick(self.api_key_env, file.api_key_env),
            strategies: pick_vec(self.strategies, file.strategies),
            temperature: pick(self.temperature, file.temperature),
            max_tokens: pick(self.max_tokens, file.max_tokens),
            seed: pick(self.seed, file.seed),
            mode: pick(self.mode, file.mode),
            cassette: pick(self.cassette, file.cassette),
            workers: pick(self.workers, file.workers),
            timeout: pick(self.timeout, file.timeout),
            executor: pick(self.executor, file.executor),
            exec_table: pick(self.exec_table, file.exec_table),
            out: pick(self.out, file.out),
        }
    }
}

impl CalibrateArgs {
    pub fn merged(self, file: CalibrateArgs) -> CalibrateArgs {
        let smoothing = if self.no_smoothing {
            Some(false)
        } else {
            pick(self.smoothing, file.smoothing)
        };
        CalibrateArgs {
            run: pick(self.run, file.run),
            seed: pick(self.seed, file.seed),
            no_smoothing: false,
            smoothing,
        }
    }
}

impl ReportArgs {
    pub fn merged(self, file: ReportArgs) -> ReportArgs {
        ReportArgs {
            run: pick_vec(self.run, file.run),
            format: pick(self.format, file.format),
            out: pick(self.out, file.out),
            bins: pick(self.bins, file.bins),
        }
    }
}

/// How CRUX answers are executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutorSpec {
    None,
    Command(Vec<String>),
    Table(PathBuf),
}

/// A validated `run` invocation.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub config: RunConfig,
    pub out: PathBuf,
    pub executor: ExecutorSpec,
    pub timeout: Duration,
}

fn missing(flag: &str) -> CliError {
    CliError::Config(format!("--{flag} is required (flag or config file)"))
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl RunArgs {
    pub fn into_plan(self) -> Result<RunPlan, CliError> {
        if self.benchmark.is_empty() {
            return Err(missing("benchmark"));
        }
        let model = self.model.ok_or_else(|| missing("model"))?;
        let out = self.out.ok_or_else(|| missing("out"))?;
        let mode = self.mode.unwrap_or(CallMode::Replay);
        if matches!(mode, CallMode::Record | CallMode::Replay) && self.cassette.is_none() {
            return Err(CliError::Config(format!(
                "--cassette is required in {mode:?} mode"
            )));
        }
        if matches!(mode, CallMode::Live | CallMode::Record) && self.endpoint.is_none() {
            return Err(CliError::Config(format!(
                "--endpoint is required in {mode:?} mode"
            )));
        }
        let workers = self.workers.unwrap_or(DEFAULT_WORKERS);
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        let temperature = self.temperature.unwrap_or(0.0);
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(CliError::Config(format!(
                "invalid --temperature {temperature}"
            )));
        }
        let executor = match (self.executor, self.exec_table) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "--executor and --exec-table are mutually exclusive".into(),
                ))
            }
            (Some(cmd), None) => {
                let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                if argv.is_empty() {
                    return Err(CliError::Config("--executor is empty".into()));
                }
                ExecutorSpec::Command(argv)
            }
            (None, Some(path)) => ExecutorSpec::Table(path),
            (None, None) => ExecutorSpec::None,
        };
        let mut strategies = vec![PromptStrategy::Intrinsic];
        for s in PromptStrategy::ALL.into_iter().skip(1) {
            if self.strategies.is_empty() || self.strategies.contains(&s) {
                strategies.push(s);
            }
        }
        let subtasks = (!self.subtasks.is_empty()).then(|| {
            let mut kinds = self.subtasks;
            kinds.sort();
            kinds.dedup();
            kinds
        });
        Ok(RunPlan {
            config: RunConfig {
                benchmarks: self.benchmark.iter().map(|p| path_string(p)).collect(),
                subtasks,
                model,
                endpoint: self.endpoint,
                api_key_env: self
                    .api_key_env
                    .unwrap_or_else(|| DEFAULT_API_KEY_ENV.into()),
                strategies,
                temperature,
                max_tokens: self.max_tokens,
                seed: self.seed.unwrap_or(0),
                mode,
                cassette: self.cassette.as_deref().map(path_string),
                workers,
                prompt_version: PROMPT_VERSION.into(),
            },
            out,
            executor,
            timeout: Duration::from_secs(self.timeout.unwrap_or(DEFAULT_TIMEOUT_SECS)),
        })
    }
}

impl ReportArgs {
    pub fn bins(&self) -> usize {
        self.bins.unwrap_or(DEFAULT_BIN_COUNT)
    }
}
