pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod stratify;
pub mod train;

pub use error::{Error, Result};
