//! Per-element anomaly detection for resident space objects.
//!
//! One small anchor-loss autoencoder is trained per object on its TLE
//! history; each new observation is flagged per orbital element when its
//! reconstruction error exceeds a calibrated threshold. Interquartile-range
//! outliers provide the reference labels for evaluation.

pub mod catalog;
pub mod error;
pub mod eval;
pub mod iforest;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod synth;
pub mod tle;
pub mod util;

pub use error::{Error, Result};
