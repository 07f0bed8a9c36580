pub mod atomic;
pub mod attacks;
pub mod channel_plan;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
