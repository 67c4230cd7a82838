//! File formats, PPM frame IO and the `splatrack` command-line pipeline
//! (synth → fit → track → eval, plus rendering) on top of `splatrack-core`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod formats;
pub mod json;
pub mod ppm;

pub use cli::run;
pub use error::{CliError, Result};
