//! File formats, run configs and commands around the `eam-core` simulator.

pub mod commands;
pub mod config;
pub mod output;
pub mod trace_file;
