//! Core library for wearable tremor capture: clinical annotation model,
//! simulated 9-axis IMU source, telemetry frame codec, signal processing,
//! spectral features, motor-task classifiers and evaluation metrics.
// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod dsp;
pub mod imu;
pub mod session;
pub mod sim;
pub mod wire;
pub mod features;
pub mod classify;
pub mod metrics;
