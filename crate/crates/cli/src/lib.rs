//! Command-line front end for `metamorph-core`: image and field files,
//! renderings, run manifests and the experiment drivers behind the
//! `metamorph` binary.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod render;

pub use error::{exit, CliError};
