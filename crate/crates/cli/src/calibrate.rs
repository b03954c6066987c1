//! The `calibrate` command.

use std::collections::BTreeMap;
use std::path::Path;

use codecal_core::calibration::{cross_validated_calibrate, CalibrationSample, MIN_CV_SAMPLES};
use codecal_core::model::{
    read_run, write_run, CalibrationGroup, CalibrationInfo, EvaluationRun, PromptStrategy,
    SubtaskKind,
};

use crate::CliError;

/// Replaces every calibrated confidence in `run` with a fresh
/// cross-validated fit per `(model, strategy, subtask)` group. Groups with
/// fewer than [`MIN_CV_SAMPLES`] graded records are left uncalibrated.
pub fn calibrate_run(
    run: &mut EvaluationRun,
    seed: u64,
    smoothing: bool,
) -> Result<CalibrationInfo, CliError> {
    let mut groups: BTreeMap<(String, PromptStrategy, SubtaskKind), Vec<usize>> = BTreeMap::new();
    for (i, r) in run.records.iter_mut().enumerate() {
        r.calibrated_confidence = None;
        if r.observation().is_some() {
            groups
                .entry((r.model.clone(), r.strategy, r.point.subtask))
                .or_default()
                .push(i);
        }
    }
    let mut info = CalibrationInfo {
        seed,
        smoothing,
        groups: Vec::with_capacity(groups.len()),
    };
    for ((model, strategy, subtask), members) in groups {
        let mut group = CalibrationGroup {
            model,
            strategy,
            subtask,
            n: members.len(),
            calibrated: false,
            fold_parameters: Vec::new(),
        };
        if members.len() < MIN_CV_SAMPLES {
            log::warn!(
                "{}/{}/{}: {} graded records, fewer than {MIN_CV_SAMPLES}; left uncalibrated",
                group.model,
                strategy,
                subtask,
                members.len()
            );
            info.groups.push(group);
            continue;
        }
        let samples: Vec<CalibrationSample<f64>> = members
            .iter()
            .map(|&i| {
                let r = &run.records[i];
                let (confidence, correct) = r.observation().expect("grouped records are graded");
                CalibrationSample {
                    id: r.record_id.clone(),
                    confidence,
                    correct,
                }
            })
            .collect();
        let cv = cross_validated_calibrate(&samples, seed, smoothing).map_err(|e| {
            CliError::Data(format!("{}/{}/{}: {e}", group.model, strategy, subtask))
        })?;
        for (&i, sample) in members.iter().zip(&cv.samples) {
            run.records[i].calibrated_confidence = Some(sample.calibrated);
        }
        group.calibrated = true;
        group.fold_parameters = cv.fits.iter().map(|p| (p.a, p.b)).collect();
        info.groups.push(group);
    }
    run.header.calibration = Some(info.clone());
    Ok(info)
}

/// Calibrates the store at `path` in place.
pub fn execute_calibrate(
    path: &Path,
    seed: Option<u64>,
    smoothing: bool,
) -> Result<CalibrationInfo, CliError> {
    let mut run = read_run(path).map_err(|e| CliError::Data(e.to_string()))?;
    let seed = seed.unwrap_or(run.header.config.seed);
    let info = calibrate_run(&mut run, seed, smoothing)?;
    write_run(path, &run).map_err(|e| CliError::Data(e.to_string()))?;
    let done = info.groups.iter().filter(|g| g.calibrated).count();
    log::info!(
        "calibrated {done} of {} groups (seed {seed})",
        info.groups.len()
    );
    Ok(info)
}
