//! Pipeline behind the `codecal` binary: `run` elicits and grades,
//! `calibrate` adds Platt-scaled confidences, `report` renders metrics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error (including
//! cassette misses), 4 transport error.

pub mod calibrate;
pub mod config;
pub mod report;
pub mod run;

use codecal_core::model::CallMode;
use codecal_gateway::{Cassette, Gateway, HttpTransport, RetryPolicy};
use thiserror::Error;

use crate::config::{Cli, Command, ConfigFile, Format, RunPlan};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Transport(_) => 4,
        }
    }
}

/// Builds the gateway a plan asks for. The API key is read from the
/// configured environment variable.
pub fn build_gateway(plan: &RunPlan) -> Result<Gateway, CliError> {
    let config = &plan.config;
    let cassette_path = config.cassette.as_deref();
    let transport = || -> Result<Box<HttpTransport>, CliError> {
        let endpoint = config.endpoint.as_deref().expect("validated by the plan");
        let key = std::env::var(&config.api_key_env).ok();
        if key.is_none() {
            log::warn!(
                "{} is not set; sending requests without a key",
                config.api_key_env
            );
        }
        HttpTransport::new(endpoint, key, plan.timeout)
            .map(Box::new)
            .map_err(|e| CliError::Config(e.to_string()))
    };
    let gateway = match config.mode {
        CallMode::Replay => {
            let path = cassette_path.expect("validated by the plan");
            Gateway::replay(
                Cassette::open_read_only(path).map_err(|e| CliError::Data(e.to_string()))?,
            )
        }
        CallMode::Record => {
            let path = cassette_path.expect("validated by the plan");
            let cassette =
                Cassette::open_for_append(path).map_err(|e| CliError::Data(e.to_string()))?;
            Gateway::record(transport()?, cassette)
        }
        CallMode::Live => Gateway::live(transport()?),
    };
    Ok(gateway.with_retry(RetryPolicy::default()))
}

/// Runs one parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Run(args) => {
            let plan = args.merged(file.run).into_plan()?;
            let gateway = build_gateway(&plan)?;
            let summary = run::execute_run(&plan, &gateway)?;
            log::info!(
                "run {}: {} points ({} resumed), {} records, {} re-asked, unparseable {:?}",
                summary.run_id,
                summary.points,
                summary.resumed,
                summary.records,
                summary.reasked,
                summary.unparseable
            );
            eprintln!("wrote {}", plan.out.display());
        }
        Command::Calibrate(args) => {
            let args = args.merged(file.calibrate);
            let path = args.run.ok_or_else(|| {
                CliError::Config("--run is required (flag or config file)".into())
            })?;
            calibrate::execute_calibrate(&path, args.seed, args.smoothing.unwrap_or(true))?;
            eprintln!("calibrated {}", path.display());
        }
        Command::Report(args) => {
            let args = args.merged(file.report);
            let out = args.out.clone().ok_or_else(|| {
                CliError::Config("--out is required (flag or config file)".into())
            })?;
            let format = args.format.unwrap_or_default();
            let report = report::load_report(&args.run, args.bins())?;
            let written = report::write_report(&report, format, &out)?;
            if format == Format::Table {
                for source in codecal_core::report::Source::ALL {
                    println!("{}", report.table(source));
                }
            }
            eprintln!("wrote {} files under {}", written.len(), out.display());
        }
    }
    Ok(())
}
