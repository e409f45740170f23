//! Batch front end of `evidencer-core`: CSV/JSON input, staged analyses,
//! CSV outputs with a run manifest.

pub mod app;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use app::{parse_threads, run, Selection};
pub use error::{exit, CliError};
pub use pipeline::{EpChoice, RunOptions, Stage};
