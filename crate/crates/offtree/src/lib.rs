//! File formats, the model container, `key=value` configuration and the
//! subcommands behind the `offtree` binary.

pub mod commands;
pub mod config;
pub mod formats;
pub mod model;
