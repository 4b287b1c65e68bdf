//! File formats, a threaded client transport and the command-line tools
//! around `fedipm-core`.

pub mod commands;
pub mod error;
pub mod pool;
pub mod problem_file;
pub mod summary;
pub mod trace;

pub use error::{CliError, CliResult};
