//! Subseasonal forecasting of North Atlantic winter weather regimes.
//!
//! The crate covers the whole chain from gridded daily fields to forecast
//! skill diagnostics: preprocessing, regime detection, driver indices, a
//! small reverse-mode autodiff engine, the forecasting models, training,
//! evaluation, and a synthetic world generator used for testing.

pub mod calendar;
pub mod drivers;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gridstore;
pub mod models;
pub mod preprocess;
pub mod regimes;
pub mod synth;
pub mod tensorgrad;
pub mod training;

pub use error::{Error, Result};
