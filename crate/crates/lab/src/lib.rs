//! Configuration, file formats, sweeps and the command-line driver built on
//! `nonlocal-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod sweeps;
pub mod tomo;

pub use error::{LabError, Result};
