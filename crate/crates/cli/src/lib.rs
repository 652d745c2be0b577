//! Command-line front end for `bellsim-core`: scenario configs, CSV/SVG
//! output and the five subcommands.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;
