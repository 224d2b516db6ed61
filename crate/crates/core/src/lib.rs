//! Gesture recognition from smartphone accelerometer and gyroscope traces
//! with a stacked LSTM classifier.
//!
//! The pipeline runs: [`ingest`] (sensor and event CSVs, segmentation) →
//! [`preprocess`] (sliding windows, normalization, participant splits) →
//! [`model`] (LSTM forward/backward, checkpoints) → [`train`] (Adam
//! mini-batch training, confusion matrices, streaming inference). [`synth`]
//! produces labeled recordings in the ingest file formats.

pub mod error;
pub mod fsutil;
pub mod ingest;
pub mod label;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use label::GestureLabel;
