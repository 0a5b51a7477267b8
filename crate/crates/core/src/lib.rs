pub mod banded;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod information;
pub mod likelihood;
pub mod rng;
pub mod scheme;
pub mod sde;

pub use error::{Error, Result};
