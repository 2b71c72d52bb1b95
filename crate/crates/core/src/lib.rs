pub mod binning;
pub mod error;
pub mod gaussian;
pub mod prob;
pub mod rng;
pub mod secondorder;
pub mod slc;
pub mod sweep;
pub mod typeclass;

pub use error::{Error, Result};
