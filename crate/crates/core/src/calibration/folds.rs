use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::platt::{fit_platt, PlattParameters};
use super::CalibrationError;
use crate::metrics::Observation;
use crate::scalar::Scalar;

pub const FOLD_COUNT: usize = 5;
/// Two samples per fold.
pub const MIN_CV_SAMPLES: usize = 2 * FOLD_COUNT;

/// Deterministic stratified assignment of sample ids to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub fold_count: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Ids are sorted, split by class, each class shuffled with a ChaCha8
    /// stream seeded by `seed`, then dealt round-robin across the folds
    /// (positives first, the deal continuing into the negatives).
    ///
    /// The plan depends only on the seed and the set of `(id, correct)`
    /// pairs, never on input order.
    pub fn stratified<S: AsRef<str>>(
        seed: u64,
        items: &[(S, bool)],
    ) -> Result<Self, CalibrationError> {
        let mut positives: Vec<&str> = Vec::new();
        let mut negatives: Vec<&str> = Vec::new();
        let mut seen = HashSet::new();
        for (id, correct) in items {
            let id = id.as_ref();
            if !seen.insert(id) {
                return Err(CalibrationError::DuplicateId(id.to_string()));
            }
            if *correct {
                positives.push(id);
            } else {
                negatives.push(id);
            }
        }
        positives.sort_unstable();
        negatives.sort_unstable();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        positives.shuffle(&mut rng);
        negatives.shuffle(&mut rng);

        let assignment = positives
            .into_iter()
            .chain(negatives)
            .enumerate()
            .map(|(i, id)| (id.to_string(), i % FOLD_COUNT))
            .collect();
        Ok(Self {
            seed,
            fold_count: FOLD_COUNT,
            assignment,
        })
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Input to cross-validated calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample<F> {
    pub id: String,
    pub confidence: F,
    pub correct: bool,
}

/// A sample with its out-of-fold calibrated confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedSample<F> {
    pub id: String,
    pub raw: F,
    pub calibrated: F,
    pub correct: bool,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidated<F> {
    pub plan: FoldPlan,
    /// Parameters fitted with fold `i` held out, indexed by `i`.
    pub fits: Vec<PlattParameters<F>>,
    /// One entry per input sample, in input order.
    pub samples: Vec<CalibratedSample<F>>,
}

impl<F: Scalar> CrossValidated<F> {
    pub fn calibrated_observations(&self) -> Vec<Observation<F>> {
        self.samples
            .iter()
            .map(|s| Observation::new(s.calibrated, s.correct))
            .collect()
    }
}

/// Calibrates every sample with parameters fitted on the other four folds.
///
/// Folds are fitted concurrently; the result is deterministic in `seed`.
pub fn cross_validated_calibrate<F: Scalar>(
    samples: &[CalibrationSample<F>],
    seed: u64,
    smoothing: bool,
) -> Result<CrossValidated<F>, CalibrationError> {
    if samples.len() < MIN_CV_SAMPLES {
        return Err(CalibrationError::InsufficientData {
            needed: MIN_CV_SAMPLES,
            got: samples.len(),
        });
    }
    for (index, s) in samples.iter().enumerate() {
        if !(s.confidence >= F::zero() && s.confidence <= F::one()) {
            return Err(CalibrationError::OutOfRange {
                index,
                value: s.confidence.to_string(),
            });
        }
    }
    let keys: Vec<(&str, bool)> = samples.iter().map(|s| (s.id.as_str(), s.correct)).collect();
    let plan = FoldPlan::stratified(seed, &keys)?;
    let folds: Vec<usize> = samples
        .iter()
        .map(|s| plan.fold_of(&s.id).expect("every sample is assigned"))
        .collect();

    let fits: Vec<Result<PlattParameters<F>, CalibrationError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..FOLD_COUNT)
            .map(|held_out| {
                let folds = &folds;
                scope.spawn(move || {
                    let train: Vec<Observation<F>> = samples
                        .iter()
                        .zip(folds)
                        .filter(|(_, &f)| f != held_out)
                        .map(|(s, _)| Observation::new(s.confidence, s.correct))
                        .collect();
                    fit_platt(&train, smoothing)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold fit panicked"))
            .collect()
    });
    let fits = fits.into_iter().collect::<Result<Vec<_>, _>>()?;

    let samples = samples
        .iter()
        .zip(&folds)
        .map(|(s, &fold)| CalibratedSample {
            id: s.id.clone(),
            raw: s.confidence,
            calibrated: fits[fold].apply(s.confidence),
            correct: s.correct,
            fold,
        })
        .collect();

    Ok(CrossValidated {
        plan,
        fits,
        samples,
    })
}
