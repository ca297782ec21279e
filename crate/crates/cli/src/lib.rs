//! Experiment configuration and command drivers for the `structsel` binary.

pub mod commands;
pub mod config;
pub mod output;
