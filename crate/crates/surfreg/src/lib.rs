//! File formats and command line for the `surfreg` registration tool.

pub mod cli;
pub mod config;
pub mod log;
pub mod obj;
