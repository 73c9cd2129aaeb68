//! Experiment runner for the `bosegas` numerics: configuration, subcommands,
//! CSV/JSON output and the acceptance suite.

pub mod acceptance;
pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
