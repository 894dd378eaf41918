//! Autoregressive LSTM forecasting with synthesized leading-indicator
//! covariates.
//!
//! The crate covers the full experimental pipeline: `.tsf` ingestion
//! ([`tsf`]), a small reverse-mode tensor library ([`tensor`]), covariate
//! synthesis, splitting and windowing ([`data`]), the baseline and segment
//! LSTM models ([`model`]), AdamW/OneCycle training ([`train`]), raw-scale
//! error metrics ([`eval`]) and the experiment grid runner ([`experiment`]).
//!
//! Data-parallel loops use rayon when the default `parallel` feature is on
//! and fall back to sequential iteration otherwise; results are identical
//! either way.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod tsf;

pub use error::{Error, Result};
