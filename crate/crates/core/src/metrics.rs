//! Reliability metrics over `(confidence, correctness)` observations.
//!
//! ECE here is the unbinned mean absolute deviation `mean |δ − p|`; binning is
//! only used for the reliability curves behind calibration plots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("metrics need at least one graded observation")]
    Empty,
    #[error("confidence {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: String },
    #[error("reliability curves need at least 2 bins, got {0}")]
    TooFewBins(usize),
}

/// A confidence paired with whether the answer was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation<F> {
    pub confidence: F,
    pub correct: bool,
}

impl<F: Scalar> Observation<F> {
    pub fn new(confidence: F, correct: bool) -> Self {
        Self {
            confidence,
            correct,
        }
    }

    /// The 0/1 indicator δ.
    #[inline]
    pub fn delta(&self) -> F {
        if self.correct {
            F::one()
        } else {
            F::zero()
        }
    }
}

fn check<F: Scalar>(obs: &[Observation<F>]) -> Result<F, MetricsError> {
    if obs.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, o) in obs.iter().enumerate() {
        // NaN fails both comparisons
        if !(o.confidence >= F::zero() && o.confidence <= F::one()) {
            return Err(MetricsError::OutOfRange {
                index,
                value: o.confidence.to_string(),
            });
        }
    }
    Ok(F::from_count(obs.len()))
}

/// Mean of `|δ − p|`.
pub fn ece<F: Scalar>(obs: &[Observation<F>]) -> Result<F, MetricsError> {
    let n = check(obs)?;
    let total = obs
        .iter()
        .fold(F::zero(), |acc, o| acc + (o.delta() - o.confidence).abs());
    Ok(total / n)
}

/// Mean of `(δ − p)²`.
pub fn brier<F: Scalar>(obs: &[Observation<F>]) -> Result<F, MetricsError> {
    let n = check(obs)?;
    let total = obs.iter().fold(F::zero(), |acc, o| {
        let d = o.delta() - o.confidence;
        acc + d * d
    });
    Ok(total / n)
}

/// Brier score of always answering `p_bar`, in its closed form `p̄(1 − p̄)`.
#[inline]
pub fn baseline_brier<F: Scalar>(p_bar: F) -> F {
    p_bar * (F::one() - p_bar)
}

/// Mean confidence `p̄` and empirical accuracy `δ̄`.
pub fn mean_reliability<F: Scalar>(obs: &[Observation<F>]) -> Result<(F, F), MetricsError> {
    let n = check(obs)?;
    let (sp, sd) = obs.iter().fold((F::zero(), F::zero()), |(sp, sd), o| {
        (sp + o.confidence, sd + o.delta())
    });
    Ok((sp / n, sd / n))
}

/// `(B₀ − B) / B₀` with `B₀ = p̄(1 − p̄)`.
///
/// Returns `Ok(None)` when the baseline is zero (every confidence is 0 or
/// every confidence is 1), where the score is undefined.
pub fn performance_score<F: Scalar>(obs: &[Observation<F>]) -> Result<Option<F>, MetricsError> {
    let (p_bar, _) = mean_reliability(obs)?;
    let b = brier(obs)?;
    Ok(score_from(baseline_brier(p_bar), b))
}

fn score_from<F: Scalar>(baseline: F, brier: F) -> Option<F> {
    if baseline == F::zero() {
        None
    } else {
        Some((baseline - brier) / baseline)
    }
}

/// All metrics of one group, computed in a single pass over validated input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary<F> {
    pub n: usize,
    pub ece: F,
    pub brier: F,
    pub mean_confidence: F,
    pub accuracy: F,
    pub baseline_brier: F,
    /// `None` when the baseline Brier score is zero.
    pub performance_score: Option<F>,
}

pub fn summarize<F: Scalar>(obs: &[Observation<F>]) -> Result<MetricsSummary<F>, MetricsError> {
    let ece = ece(obs)?;
    let brier = brier(obs)?;
    let (mean_confidence, accuracy) = mean_reliability(obs)?;
    let baseline = baseline_brier(mean_confidence);
    Ok(MetricsSummary {
        n: obs.len(),
        ece,
        brier,
        mean_confidence,
        accuracy,
        baseline_brier: baseline,
        performance_score: score_from(baseline, brier),
    })
}

/// One equal-width confidence bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin<F> {
    pub lower: F,
    pub upper: F,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_confidence: Option<F>,
    pub accuracy: Option<F>,
}

/// Binned accuracy against confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve<F> {
    pub bins: Vec<ReliabilityBin<F>>,
}

impl<F: Scalar> ReliabilityCurve<F> {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Count-weighted means of the per-bin confidence and accuracy.
    pub fn weighted_means(&self) -> Option<(F, F)> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let (sp, sd) = self
            .bins
            .iter()
            .fold((F::zero(), F::zero()), |(sp, sd), b| {
                let w = F::from_count(b.count);
                (
                    sp + b.mean_confidence.unwrap_or_else(F::zero) * w,
                    sd + b.accuracy.unwrap_or_else(F::zero) * w,
                )
            });
        let n = F::from_count(total);
        Some((sp / n, sd / n))
    }
}

/// Index of the `[i/k, (i+1)/k)` bin holding `p`; the last bin is closed.
pub fn bin_index<F: Scalar>(p: F, bin_count: usize) -> usize {
    let k = F::from_count(bin_count);
    let last = bin_count - 1;
    let mut i = (p * k).floor().to_usize().unwrap_or(0).min(last);
    // p·k can round across an edge; settle against the exact edges i/k
    if i > 0 && p < F::from_count(i) / k {
        i -= 1;
    } else if i < last && p >= F::from_count(i + 1) / k {
        i += 1;
    }
    i
}

/// Equal-width reliability curve with `bin_count` bins over `[0, 1]`.
pub fn reliability_curve<F: Scalar>(
    obs: &[Observation<F>],
    bin_count: usize,
) -> Result<ReliabilityCurve<F>, MetricsError> {
    if bin_count < 2 {
        return Err(MetricsError::TooFewBins(bin_count));
    }
    check(obs)?;
    let mut sums = vec![(0usize, F::zero(), F::zero()); bin_count];
    for o in obs {
        let slot = &mut sums[bin_index(o.confidence, bin_count)];
        slot.0 += 1;
        slot.1 = slot.1 + o.confidence;
        slot.2 = slot.2 + o.delta();
    }
    let k = F::from_count(bin_count);
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, sp, sd))| {
            let c = F::from_count(count);
            ReliabilityBin {
                lower: F::from_count(i) / k,
                upper: F::from_count(i + 1) / k,
                count,
                mean_confidence: (count > 0).then(|| sp / c),
                accuracy: (count > 0).then(|| sd / c),
            }
        })
        .collect();
    Ok(ReliabilityCurve { bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(ds: &[u8], ps: &[f64]) -> Vec<Observation<f64>> {
        ds.iter()
            .zip(ps)
            .map(|(&d, &p)| Observation::new(p, d == 1))
            .collect()
    }

    #[test]
    fn ece_examples() {
        assert_eq!(ece(&obs(&[1, 1, 0], &[1.0, 1.0, 0.0])).unwrap(), 0.0);
        // (0.2 + 0.4) / 2
        assert!((ece(&obs(&[1, 0], &[0.8, 0.4])).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(ece(&obs(&[0], &[1.0])).unwrap(), 1.0);
        assert_eq!(ece::<f64>(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&obs(&[1, 0, 1], &[1.0, 0.0, 1.0])).unwrap(), 0.0);
        // (0.04 + 0.16) / 2
        assert!((brier(&obs(&[1, 0], &[0.8, 0.4])).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(brier(&obs(&[0], &[1.0])).unwrap(), 1.0);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_brier(0.5), 0.25);
        assert_eq!(baseline_brier(0.0), 0.0);
        assert_eq!(baseline_brier(1.0), 0.0);
        assert!((baseline_brier(0.6f64) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn performance_score_examples() {
        let perfect = obs(&[1, 0, 1, 0], &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(performance_score(&perfect).unwrap(), Some(1.0));

        let constant = obs(&[1, 1, 0, 0], &[0.5; 4]);
        assert_eq!(brier(&constant).unwrap(), 0.25);
        assert!(performance_score(&constant).unwrap().unwrap().abs() < 1e-12);

        // B = 0.1 and p̄ = 0.6 from δ=[1,0], p=[0.8,0.4]
        let ps = performance_score(&obs(&[1, 0], &[0.8, 0.4]))
            .unwrap()
            .unwrap();
        assert!((ps - (0.24 - 0.1) / 0.24).abs() < 1e-12);
        assert!((ps - 0.583_333_333_333).abs() < 1e-9);

        assert_eq!(performance_score(&obs(&[1, 1], &[1.0, 1.0])).unwrap(), None);
    }

    #[test]
    fn mean_reliability_examples() {
        let (p, d) = mean_reliability(&obs(&[1, 0], &[0.8, 0.4])).unwrap();
        assert!((p - 0.6).abs() < 1e-15 && d == 0.5);
        assert_eq!(mean_reliability(&obs(&[1], &[0.7])).unwrap(), (0.7, 1.0));
        assert_eq!(
            mean_reliability(&obs(&[0, 0, 0], &[0.3; 3])).unwrap().1,
            0.0
        );
    }

    #[test]
    fn out_of_range_confidence_is_rejected() {
        assert!(matches!(
            ece(&obs(&[1], &[1.2])),
            Err(MetricsError::OutOfRange { index: 0, .. })
        ));
        assert!(brier(&obs(&[1], &[f64::NAN])).is_err());
    }

    #[test]
    fn curve_placement() {
        let c = reliability_curve(&obs(&[1], &[0.95]), 10).unwrap();
        assert_eq!(c.bins[9].count, 1);
        let c = reliability_curve(&obs(&[1], &[1.0]), 10).unwrap();
        assert_eq!(c.bins[9].count, 1);
        assert_eq!(c.bins[0].mean_confidence, None);
        assert_eq!(
            reliability_curve(&obs(&[1], &[0.5]), 1).unwrap_err(),
            MetricsError::TooFewBins(1)
        );
    }

    #[test]
    fn uniform_grid_fills_bins_evenly() {
        // Oracle: k/100 lies in bin i iff 10·i ≤ k < 10·(i+1), in exact integers.
        let bins = 10usize;
        let mut expected = vec![0usize; bins];
        for k in 0..100usize {
            let i = (0..bins)
                .find(|&i| k * bins >= 100 * i && k * bins < 100 * (i + 1))
                .unwrap();
            expected[i] += 1;
        }
        assert_eq!(expected, vec![10; 10]);

        let data: Vec<_> = (0..100)
            .map(|k| Observation::new(k as f64 / 100.0, k % 3 == 0))
            .collect();
        let curve = reliability_curve(&data, bins).unwrap();
        let counts: Vec<_> = curve.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, expected);
    }

    #[test]
    fn bin_edges_follow_half_open_rule() {
        for k in [3usize, 5, 7, 10, 20] {
            for i in 0..k {
                let edge = i as f64 / k as f64;
                assert_eq!(bin_index(edge, k), i, "edge {edge} with {k} bins");
            }
            assert_eq!(bin_index(1.0, k), k - 1);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let data = [
            Observation::new(0.8f32, true),
            Observation::new(0.4f32, false),
        ];
        assert!((ece(&data).unwrap() - 0.3).abs() < 1e-6);
        assert!((brier(&data).unwrap() - 0.1).abs() < 1e-6);
    }

    fn arb_obs() -> impl Strategy<Value = Vec<Observation<f64>>> {
        prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..50)
            .prop_map(|v| v.into_iter().map(|(p, d)| Observation::new(p, d)).collect())
    }

    proptest! {
        #[test]
        fn brier_never_exceeds_ece(data in arb_obs()) {
            prop_assert!(brier(&data).unwrap() <= ece(&data).unwrap() + 1e-15);
        }

        #[test]
        fn mean_gap_bounded_by_ece(data in arb_obs()) {
            let (p, d) = mean_reliability(&data).unwrap();
            prop_assert!((p - d).abs() <= ece(&data).unwrap() + 1e-12);
        }

        #[test]
        fn order_free(data in arb_obs()) {
            let mut rev = data.clone();
            rev.reverse();
            let a = summarize(&data).unwrap();
            let b = summarize(&rev).unwrap();
            prop_assert!((a.ece - b.ece).abs() < 1e-12);
            prop_assert!((a.brier - b.brier).abs() < 1e-12);
            match (a.performance_score, b.performance_score) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false, "definedness differs"),
            }
        }

        #[test]
        fn score_at_most_one(data in arb_obs()) {
            let s = summarize(&data).unwrap();
            prop_assert!(s.baseline_brier <= 0.25);
            if let Some(ps) = s.performance_score {
                prop_assert!(ps <= 1.0);
                if s.brier > 0.0 { prop_assert!(ps < 1.0); }
            }
        }

        #[test]
        fn curve_reconstructs_means(data in arb_obs(), bins in 2usize..25) {
            let curve = reliability_curve(&data, bins).unwrap();
            prop_assert_eq!(curve.total(), data.len());
            let (p, d) = mean_reliability(&data).unwrap();
            let (cp, cd) = curve.weighted_means().unwrap();
            prop_assert!((p - cp).abs() < 1e-12);
            prop_assert!((d - cd).abs() < 1e-12);
        }
    }
}
