//! Front end for `slln-core`: config files, run manifests and the `slln`
//! subcommands.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::run;
