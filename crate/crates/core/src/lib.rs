//! Geometric state-space models over sequences of symmetric positive-definite
//! matrices.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
mod fsutil;
pub mod manifold;
pub mod sample;
pub mod sequence;
pub mod spd;
pub mod ssm;
pub mod train;

pub use error::{GeoError, Result};
