//! Multiscale scan-CUSUM change-point detection with cross-sequence
//! information sharing, plus the Monte-Carlo machinery for its error bounds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod genmodel;
pub mod io;
pub mod metrics;
pub mod multiseq;
pub mod rng;
pub mod stats;

pub use detect::{
    calibrate_threshold, detect, extended_scan_cusum, scan_cusum, Detection, DetectionResult, DetectorConfig,
    DetectorMode, DEFAULT_C_SCAN, DEFAULT_RHO,
};
pub use error::{Error, Result};
pub use genmodel::{Dataset, GroundTruth, IntensitySpec, JumpSpec};
pub use multiseq::{em_estimate_intensity, refine_changepoints, run_pipeline, EmFit, EmParams};
pub use rng::Streams;
pub use stats::{Interval, LogWeightFn, PrefixSums, WeightFn};
