pub mod autoenc;
pub mod cli;
pub mod config;
pub mod detect;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inject;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod t2v;
pub mod tensor;

pub use error::{Error, Result};
