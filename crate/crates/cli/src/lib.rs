//! Command-line companion to `recaudit-core`: dataset and model files,
//! experiment sweeps over sampled audit pairs, and CSV reporting.

pub mod checkpoint;
pub mod config;
pub mod csv_out;
pub mod harness;
pub mod io;
pub mod synth;
