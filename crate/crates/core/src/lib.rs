pub mod error;
pub mod geometry;
pub mod cli;
pub mod continuation;
pub mod dimension;
pub mod dynamics;
pub mod zeta;
pub mod numerics;
pub mod phase;
pub mod spectrum;

pub use error::{Error, Result};
