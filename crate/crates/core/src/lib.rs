//! Post-processing toolkit for air-to-ground MIMO channel measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod delayline;
pub mod envelope;
pub mod error;
pub mod fading;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod special;
pub mod stationarity;
pub mod synth;

pub use error::{Error, Result};
