#![no_std]
extern crate alloc;

pub mod beamform;
pub mod error;
pub mod flops;
pub mod ipn;
pub mod kddd;
pub mod linalg;
pub mod manifold;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{CMat, Tally, C64};
