//! Files, configuration and the command line around `sisr-core`.
//!
//! * [`io`]: PNG and PPM images.
//! * [`weights`]: SRWT archive files.
//! * [`dataset`]: manifest files and their images.
//! * [`config`]: TOML run configurations.
//! * [`runner`]: training runs with logs, checkpoints and resume.
//! * [`eval`]: dataset evaluation and report files.
//! * [`synth`]: synthetic texture images.
//! * [`cli`]: the `sisr` subcommands.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod runner;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
