//! File formats, the data pipeline and the `cvae` command line around
//! [`cvae_core`].
//!
//! The binary's subcommands map onto [`pipeline`]: `preprocess` writes a
//! split directory ([`split`]), `train` writes checkpoints
//! ([`checkpoint`]), `evaluate` and `analyze` write delimited reports
//! ([`report`]), `recommend` prints a ranked list and `fixture` writes the
//! synthetic dataset ([`fixture`]).

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fixture;
pub mod io;
pub mod lock;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod split;

pub use error::{Error, Result};
