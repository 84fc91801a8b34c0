//! Device-free motion detection over ambient WiFi signal-strength streams.
//!
//! The pipeline learns a non-parametric "silence" profile of each link's
//! windowed RSS variance, scores live windows against the profile's
//! critical bound, adapts the profiles to slow environmental drift, and
//! fuses all streams' anomaly scores into a smoothed global decision.
//! Baseline detectors and an evaluation harness support head-to-head
//! benchmarking on synthetic or recorded traces.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod density;
pub mod detect;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod profile;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
