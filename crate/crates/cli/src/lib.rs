//! Configuration parsing and subcommand drivers for the `fins` binary.

pub mod commands;
pub mod config;
