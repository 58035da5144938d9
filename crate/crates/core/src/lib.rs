//! Delay-embedding anomaly detection and sparse-regression forecasting for
//! phasor measurement data.
//!
//! The pipeline builds a Hankel matrix from each measurement channel, fits a
//! forced linear model on its leading eigen time-delay coordinates and treats
//! the last retained coordinate as an intermittent forcing signal. Samples
//! whose forcing deviates by more than `k` standard deviations are flagged.
//! A sparse-regression model over a candidate library forecasts channels
//! forward in time, and the same detector runs on the forecast.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod artifact;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod havok;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod sindy;
pub mod stream;
pub mod synth;
pub mod timeseries_io;

pub use error::{Error, ErrorKind};
pub use timeseries_io::{MeasurementFrame, Timestamp};
