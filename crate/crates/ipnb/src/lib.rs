//! File formats, experiment sweeps and the command-line front end for
//! [`ipnb_core`].

pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
