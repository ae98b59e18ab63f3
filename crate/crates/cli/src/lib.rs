//! Configuration and commands behind the `janus` binary.

pub mod commands;
pub mod config;
