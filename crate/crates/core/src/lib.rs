pub mod cachesim;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod models;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
