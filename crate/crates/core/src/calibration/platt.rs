use serde::{Deserialize, Serialize};

use super::{logit, sigmoid, softplus, CalibrationError};
use crate::metrics::Observation;
use crate::scalar::Scalar;

/// Likelihoods are clamped to `[ε, 1 − ε]`.
pub const NLL_EPSILON: f64 = 1e-12;

/// Why a fit short-circuited the optimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Degeneracy {
    #[default]
    None,
    /// Every confidence was identical, so `A` is unidentifiable and pinned to 0.
    ConstantInput,
    /// Only one class was present; the fit is the constant `B = logit(t)`.
    SingleClass,
}

/// Fitted sigmoid parameters plus fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParameters<F> {
    pub a: F,
    pub b: F,
    pub iterations: usize,
    /// NLL of `(a, b)` on the training targets actually used.
    pub final_nll: F,
    pub converged: bool,
    pub degenerate: Degeneracy,
    /// Whether smoothed targets were used for the training NLL.
    pub smoothed_targets: bool,
}

impl<F: Scalar> PlattParameters<F> {
    /// Parameters not produced by a fit (diagnostics zeroed).
    pub fn fixed(a: F, b: F) -> Self {
        Self {
            a,
            b,
            iterations: 0,
            final_nll: F::zero(),
            converged: true,
            degenerate: Degeneracy::None,
            smoothed_targets: false,
        }
    }

    pub fn apply(&self, p: F) -> F {
        super::apply_platt(self, p)
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattOptions {
    /// Use Platt's smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
    pub smoothing: bool,
    pub max_iterations: usize,
    /// Stop when the applied parameter step has ∞-norm below this.
    pub step_tolerance: f64,
}

impl Default for PlattOptions {
    fn default() -> Self {
        Self {
            smoothing: true,
            max_iterations: 100,
            step_tolerance: 1e-10,
        }
    }
}

/// `(confidence, target)` pairs the NLL is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<F> {
    pub points: Vec<(F, F)>,
    pub positives: usize,
    pub negatives: usize,
    pub smoothed: bool,
}

impl<F: Scalar> TrainingSet<F> {
    pub fn from_observations(obs: &[Observation<F>], smoothing: bool) -> Self {
        let positives = obs.iter().filter(|o| o.correct).count();
        let negatives = obs.len() - positives;
        let (hi, lo) = if smoothing {
            smoothed_targets(positives, negatives)
        } else {
            (F::one(), F::zero())
        };
        Self {
            points: obs
                .iter()
                .map(|o| (o.confidence, if o.correct { hi } else { lo }))
                .collect(),
            positives,
            negatives,
            smoothed: smoothing,
        }
    }

    fn mean_target(&self) -> F {
        let sum = self.points.iter().fold(F::zero(), |acc, &(_, t)| acc + t);
        sum / F::from_count(self.points.len())
    }
}

fn smoothed_targets<F: Scalar>(positives: usize, negatives: usize) -> (F, F) {
    let two = F::lit(2.0);
    let hi = (F::from_count(positives) + F::one()) / (F::from_count(positives) + two);
    let lo = F::one() / (F::from_count(negatives) + two);
    (hi, lo)
}

/// `−Σ [t·ln q + (1−t)·ln(1−q)]` with `q = sigmoid(a·p + b)` clamped to `[ε, 1−ε]`.
pub fn nll<F: Scalar>(a: F, b: F, set: &TrainingSet<F>) -> F {
    let eps = F::lit(NLL_EPSILON);
    let lo = -(F::one() - eps).ln();
    let hi = -eps.ln();
    set.points.iter().fold(F::zero(), |acc, &(p, t)| {
        let z = a * p + b;
        // −ln q = softplus(−z), −ln(1−q) = softplus(z)
        let neg_ln_q = softplus(-z).max(lo).min(hi);
        let neg_ln_1q = softplus(z).max(lo).min(hi);
        acc + t * neg_ln_q + (F::one() - t) * neg_ln_1q
    })
}

/// NLL of fitted parameters on observations, building targets as the fit did.
pub fn nll_observations<F: Scalar>(
    params: &PlattParameters<F>,
    obs: &[Observation<F>],
    smoothing: bool,
) -> F {
    nll(
        params.a,
        params.b,
        &TrainingSet::from_observations(obs, smoothing),
    )
}

/// `(∂/∂a, ∂/∂b)` of the unclamped NLL.
pub fn nll_gradient<F: Scalar>(a: F, b: F, set: &TrainingSet<F>) -> (F, F) {
    set.points
        .iter()
        .fold((F::zero(), F::zero()), |(ga, gb), &(p, t)| {
            let r = sigmoid(a * p + b) - t;
            (ga + r * p, gb + r)
        })
}

/// Hessian entries `(h_aa, h_ab, h_bb)`.
pub fn nll_hessian<F: Scalar>(a: F, b: F, set: &TrainingSet<F>) -> (F, F, F) {
    set.points.iter().fold(
        (F::zero(), F::zero(), F::zero()),
        |(haa, hab, hbb), &(p, _)| {
            let q = sigmoid(a * p + b);
            let w = q * (F::one() - q);
            (haa + w * p * p, hab + w * p, hbb + w)
        },
    )
}

/// Fits `(A, B)` with default options and the given smoothing choice.
pub fn fit_platt<F: Scalar>(
    obs: &[Observation<F>],
    smoothing: bool,
) -> Result<PlattParameters<F>, CalibrationError> {
    fit_platt_with(
        obs,
        &PlattOptions {
            smoothing,
            ..PlattOptions::default()
        },
    )
}

/// Newton–Raphson from `(1, 0)` with Armijo backtracking; falls back to a
/// gradient step when the Hessian is numerically singular.
///
/// Single-class input is solved in closed form (`A = 0`, `B = logit(t)`),
/// using smoothed targets even when smoothing is off so `B` stays finite.
/// Constant confidences pin `A = 0` and fit the intercept only.
pub fn fit_platt_with<F: Scalar>(
    obs: &[Observation<F>],
    options: &PlattOptions,
) -> Result<PlattParameters<F>, CalibrationError> {
    if obs.len() < 2 {
        return Err(CalibrationError::InsufficientData {
            needed: 2,
            got: obs.len(),
        });
    }
    for (index, o) in obs.iter().enumerate() {
        if !(o.confidence >= F::zero() && o.confidence <= F::one()) {
            return Err(CalibrationError::OutOfRange {
                index,
                value: o.confidence.to_string(),
            });
        }
    }

    let single_class = obs.iter().all(|o| o.correct) || obs.iter().all(|o| !o.correct);
    if single_class {
        let set = TrainingSet::from_observations(obs, true);
        return Ok(closed_form(
            set.mean_target(),
            &set,
            Degeneracy::SingleClass,
        ));
    }

    let set = TrainingSet::from_observations(obs, options.smoothing);
    let (min, max) = obs
        .iter()
        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), o| {
            (lo.min(o.confidence), hi.max(o.confidence))
        });
    if max == min {
        return Ok(closed_form(
            set.mean_target(),
            &set,
            Degeneracy::ConstantInput,
        ));
    }

    Ok(newton(&set, options))
}

fn closed_form<F: Scalar>(
    t: F,
    set: &TrainingSet<F>,
    degenerate: Degeneracy,
) -> PlattParameters<F> {
    let b = logit(t);
    PlattParameters {
        a: F::zero(),
        b,
        iterations: 0,
        final_nll: nll(F::zero(), b, set),
        converged: true,
        degenerate,
        smoothed_targets: set.smoothed,
    }
}

fn newton<F: Scalar>(set: &TrainingSet<F>, options: &PlattOptions) -> PlattParameters<F> {
    let armijo = F::lit(1e-4);
    let min_step = F::lit(1e-10);
    let slack = F::epsilon() * F::lit(8.0);

    let (mut a, mut b) = (F::one(), F::zero());
    let mut f = nll(a, b, set);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=options.max_iterations {
        iterations = it;
        let (ga, gb) = nll_gradient(a, b, set);
        if ga == F::zero() && gb == F::zero() {
            converged = true;
            break;
        }
        let (haa, hab, hbb) = nll_hessian(a, b, set);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > F::epsilon() * haa * hbb && det > F::min_positive_value() {
            ((hab * gb - hbb * ga) / det, (hab * ga - haa * gb) / det)
        } else {
            (-ga, -gb)
        };
        let gd = ga * da + gb * db;

        let mut step = F::one();
        let accepted = loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb, set);
            // slack absorbs rounding once the objective stops changing
            if nf <= f + armijo * step * gd + slack * f.abs() {
                break Some((na, nb, nf));
            }
            step = step / F::lit(2.0);
            if step < min_step {
                break None;
            }
        };
        let Some((na, nb, nf)) = accepted else {
            converged = ga.abs().max(gb.abs()) <= F::lit(1e-8) * F::from_count(set.points.len());
            break;
        };
        let applied = step * da.abs().max(db.abs());
        a = na;
        b = nb;
        f = nf;
        let tol = F::lit(options.step_tolerance)
            .max(F::epsilon() * F::lit(4.0) * (F::one() + a.abs().max(b.abs())));
        if applied < tol {
            converged = true;
            break;
        }
    }

    PlattParameters {
        a,
        b,
        iterations,
        final_nll: nll(a, b, set),
        converged,
        degenerate: Degeneracy::None,
        smoothed_targets: set.smoothed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: &[(f64, f64)]) -> TrainingSet<f64> {
        TrainingSet {
            points: points.to_vec(),
            positives: 0,
            negatives: 0,
            smoothed: false,
        }
    }

    fn central_diff(a: f64, b: f64, s: &TrainingSet<f64>, h: f64) -> (f64, f64) {
        (
            (nll(a + h, b, s) - nll(a - h, b, s)) / (2.0 * h),
            (nll(a, b + h, s) - nll(a, b - h, s)) / (2.0 * h),
        )
    }

    fn sample_world(seed: u64, n: usize, a: f64, b: f64) -> Vec<Observation<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p: f64 = rng.random();
                let q = sigmoid(a * p + b);
                Observation::new(p, rng.random::<f64>() < q)
            })
            .collect()
    }

    #[test]
    fn nll_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((nll(0.0, 0.0, &set(&[(0.37, 1.0)])) - ln2).abs() < 1e-15);
        assert!((nll(0.0, 0.0, &set(&[(0.2, 1.0), (0.9, 0.0)])) - 2.0 * ln2).abs() < 1e-15);
        assert!((nll(3.0, -1.5, &set(&[(0.5, 1.0)])) - ln2).abs() < 1e-15);
    }

    #[test]
    fn nll_is_finite_under_extreme_parameters() {
        let s = set(&[(1.0, 0.0), (0.5, 0.0)]);
        let v = nll(1e6, 0.0, &s);
        assert!(v.is_finite());
        assert!((v - 2.0 * -(NLL_EPSILON.ln())).abs() < 1e-6);
    }

    #[test]
    fn constant_input_pins_slope() {
        let obs: Vec<Observation<f64>> =
            (0..10).map(|i| Observation::new(0.5, i % 2 == 0)).collect();
        let fit = fit_platt(&obs, false).unwrap();
        assert_eq!(fit.degenerate, Degeneracy::ConstantInput);
        assert_eq!(fit.a, 0.0);
        assert!(fit.b.abs() < 1e-15);
        assert_eq!(fit.apply(0.5), 0.5);
        // (0, 0) is stationary in B: the only free parameter
        let s = TrainingSet::from_observations(&obs, false);
        let (_, db) = central_diff(0.0, 0.0, &s, 1e-5);
        assert!(db.abs() < 1e-9);
    }

    #[test]
    fn single_class_with_smoothing_hits_smoothed_target() {
        let obs: Vec<_> = (0..8)
            .map(|i| Observation::new(0.1 * i as f64, true))
            .collect();
        let fit = fit_platt(&obs, true).unwrap();
        assert_eq!(fit.degenerate, Degeneracy::SingleClass);
        let s = TrainingSet::from_observations(&obs, true);
        assert!((s.points[0].1 - 0.9).abs() < 1e-15);
        let reference = nll(0.0, logit(0.9), &s);
        assert!(fit.final_nll <= reference + 1e-9);
        assert!((fit.apply(0.3) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn single_class_without_smoothing_stays_finite() {
        let obs: Vec<_> = (0..6)
            .map(|i| Observation::new(0.1 * i as f64, false))
            .collect();
        let fit = fit_platt(&obs, false).unwrap();
        assert_eq!(fit.degenerate, Degeneracy::SingleClass);
        assert!(fit.a.is_finite() && fit.b.is_finite());
        assert!((fit.apply(0.0) - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let obs = [Observation::new(0.5, true)];
        assert_eq!(
            fit_platt(&obs, true).unwrap_err(),
            CalibrationError::InsufficientData { needed: 2, got: 1 }
        );
    }

    #[test]
    fn separable_data_without_smoothing_does_not_blow_up() {
        let obs: Vec<_> = (0..20)
            .map(|i| Observation::new(i as f64 / 19.0, i >= 10))
            .collect();
        let fit = fit_platt(&obs, false).unwrap();
        assert!(fit.a.is_finite() && fit.b.is_finite() && fit.a > 0.0);
        let smoothed = fit_platt(&obs, true).unwrap();
        assert!(smoothed.converged);
        assert!(smoothed.a < fit.a);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    (
                        rng.random::<f64>(),
                        if rng.random::<bool>() { 1.0 } else { 0.0 },
                    )
                })
                .collect();
            let s = set(&pts);
            let a = rng.random_range(-6.0..6.0);
            let b = rng.random_range(-4.0..4.0);
            let (ga, gb) = nll_gradient(a, b, &s);
            let (fa, fb) = central_diff(a, b, &s, 1e-5);
            for (an, fd) in [(ga, fa), (gb, fb)] {
                let scale = an.abs().max(fd.abs()).max(1e-3);
                assert!((an - fd).abs() / scale < 1e-6, "analytic {an} vs fd {fd}");
            }
        }
    }

    #[test]
    fn fit_is_stationary() {
        for seed in 0..5 {
            let obs = sample_world(seed, 400, 2.0, -0.7);
            for smoothing in [false, true] {
                let fit = fit_platt(&obs, smoothing).unwrap();
                assert!(fit.converged);
                let s = TrainingSet::from_observations(&obs, smoothing);
                let (da, db) = central_diff(fit.a, fit.b, &s, 1e-5);
                assert!(da.abs() < 1e-6 && db.abs() < 1e-6, "({da}, {db})");
                assert!((fit.final_nll - nll_observations(&fit, &obs, smoothing)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recovers_generating_parameters() {
        let obs = sample_world(7, 10_000, 3.0, -1.5);
        let fit = fit_platt(&obs, false).unwrap();
        assert!((fit.a - 3.0).abs() <= 0.15, "A = {}", fit.a);
        assert!((fit.b + 1.5).abs() <= 0.15, "B = {}", fit.b);
        let truth = nll(3.0, -1.5, &TrainingSet::from_observations(&obs, false));
        assert!(fit.final_nll <= truth + 1e-9);
    }

    #[test]
    fn single_precision_fit_agrees() {
        let obs = sample_world(5, 2_000, 2.5, -1.0);
        let obs32: Vec<_> = obs
            .iter()
            .map(|o| Observation::new(o.confidence as f32, o.correct))
            .collect();
        let f64fit = fit_platt(&obs, true).unwrap();
        let f32fit = fit_platt(&obs32, true).unwrap();
        assert!((f64fit.a - f32fit.a as f64).abs() < 1e-2);
        assert!((f64fit.b - f32fit.b as f64).abs() < 1e-2);
    }
}
