//! Configuration and subcommand implementations behind the `inducement` binary.

pub mod commands;
pub mod config;
