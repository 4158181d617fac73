pub mod cli;
pub mod config;
pub mod error;
pub mod fastmath;
pub mod fsutil;
pub mod geometry;
pub mod net;
pub mod objective;
pub mod rng;
pub mod slice_data;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
