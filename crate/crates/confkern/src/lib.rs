//! Reuters loading, result files, run manifests and the `confkern` command
//! line on top of [`confkern_core`].

pub mod cli;
pub mod corpus;
pub mod error;
pub mod geometry_report;
pub mod grid;
pub mod manifest;
pub mod output;

pub use error::{CliError, Result};
