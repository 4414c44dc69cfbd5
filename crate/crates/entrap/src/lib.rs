//! File formats, experiment configs, the benchmark sweep and the command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod formats;
