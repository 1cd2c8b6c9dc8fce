//! Std companion to `mwphoton-core`: TOML configuration, CSV/JSON output,
//! a rayon executor and the experiment pipelines used by the `mwphoton` binary.

pub mod config;
pub mod exec;
pub mod io;
pub mod scenarios;
