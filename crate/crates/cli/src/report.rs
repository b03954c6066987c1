//! The `report` command.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use codecal_core::model::read_run;
use codecal_core::report::{curve_csv, histogram_csv, Report, Source};

use crate::config::Format;
use crate::CliError;

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Loads and merges run stores. The same record of the same model may not
/// appear twice.
pub fn load_report(runs: &[PathBuf], bins: usize) -> Result<Report, CliError> {
    if runs.is_empty() {
        return Err(CliError::Config(
            "--run is required (flag or config file)".into(),
        ));
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for path in runs {
        let run = read_run(path).map_err(|e| CliError::Data(e.to_string()))?;
        for r in run.records {
            if !seen.insert((r.model.clone(), r.record_id.clone())) {
                return Err(CliError::Data(format!(
                    "{}: record {} of model {} already loaded from another run",
                    path.display(),
                    r.record_id,
                    r.model
                )));
            }
            records.push(r);
        }
    }
    Report::build(&records, bins).map_err(|e| CliError::Config(e.to_string()))
}

/// Writes metric files in `format` plus curve and histogram CSVs under
/// `out`. Returns the written paths.
pub fn write_report(report: &Report, format: Format, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    mkdir(out)?;
    let mut written = Vec::new();
    match format {
        Format::Table => {
            for source in Source::ALL {
                let name = format!("metrics_{}.txt", source.label());
                written.push(write(out.join(name), &report.table(source))?);
            }
        }
        Format::Csv => {
            for source in Source::ALL {
                let name = format!("metrics_{}.csv", source.label());
                written.push(write(out.join(name), &report.csv(source))?);
            }
        }
        Format::Json => written.push(write(out.join("metrics.json"), &report.json())?),
    }
    let curves = out.join("curves");
    let histograms = out.join("histograms");
    mkdir(&curves)?;
    mkdir(&histograms)?;
    for group in &report.groups {
        for source in Source::ALL {
            let Some(curve) = group.curve(source) else {
                continue;
            };
            let name = format!("{}__{}.csv", group.key.slug(), source.label());
            written.push(write(curves.join(&name), &curve_csv(curve))?);
            written.push(write(histograms.join(&name), &histogram_csv(curve))?);
        }
    }
    Ok(written)
}
