//! Platt scaling: `p̌ = 1 / (1 + exp(−(A·p + B)))` with `(A, B)` fitted by
//! minimizing the negative log-likelihood, applied out-of-fold through
//! stratified 5-fold cross-validation.

mod folds;
mod platt;

use thiserror::Error;

use crate::scalar::Scalar;

pub use folds::{
    cross_validated_calibrate, CalibratedSample, CalibrationSample, CrossValidated, FoldPlan,
    FOLD_COUNT, MIN_CV_SAMPLES,
};
pub use platt::{
    fit_platt, fit_platt_with, nll, nll_gradient, nll_hessian, nll_observations, Degeneracy,
    PlattOptions, PlattParameters, TrainingSet, NLL_EPSILON,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("confidence {value} for sample {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// `ln(t / (1 − t))`.
#[inline]
pub fn logit<F: Scalar>(t: F) -> F {
    (t / (F::one() - t)).ln()
}

/// `ln(1 + eᶻ)` without overflow.
#[inline]
pub(crate) fn softplus<F: Scalar>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

/// Maps a raw confidence through the fitted sigmoid.
#[inline]
pub fn apply_platt<F: Scalar>(params: &PlattParameters<F>, p: F) -> F {
    sigmoid(params.a * p + params.b)
}
