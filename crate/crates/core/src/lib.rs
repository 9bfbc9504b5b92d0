//! Fault detection on point-on-wave current streams by innovation whitening
//! and a sequential smooth test, overcurrent relay baselines, a Monte-Carlo
//! harness over a simulated radial feeder, and subband waveform compression.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod compression;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod innovation;
pub mod isfd;
pub mod nst;
pub mod rng;
pub mod sim;
pub mod special;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::WaveformSeries;
