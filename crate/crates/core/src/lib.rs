//! Reliability analysis for verbalized LLM confidence on code reasoning tasks.
//!
//! The crate covers the offline half of an evaluation: benchmark ingestion and
//! the run-store format ([`model`]), prompt rendering and response parsing
//! ([`prompting`]), correctness grading ([`grading`]), the reliability metrics
//! ([`metrics`]), Platt calibration with stratified 5-fold cross-validation
//! ([`calibration`]) and report rendering ([`report`]).
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar for the common `f64` case.

pub mod calibration;
pub mod grading;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod report;
pub mod scalar;

pub use scalar::Scalar;

/// `(confidence, correctness)` pair in double precision.
pub type Observation = metrics::Observation<f64>;
/// Single-precision observation.
pub type Observation32 = metrics::Observation<f32>;
pub type MetricsSummary = metrics::MetricsSummary<f64>;
pub type ReliabilityCurve = metrics::ReliabilityCurve<f64>;
pub type ReliabilityBin = metrics::ReliabilityBin<f64>;
/// Fitted sigmoid parameters in double precision.
pub type PlattParameters = calibration::PlattParameters<f64>;
pub type PlattParameters32 = calibration::PlattParameters<f32>;
pub type CalibrationSample = calibration::CalibrationSample<f64>;
pub type CrossValidated = calibration::CrossValidated<f64>;
