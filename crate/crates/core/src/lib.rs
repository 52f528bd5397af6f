pub mod error;
pub mod fairness;
pub mod gaussian;
pub mod harness;
pub mod model;
pub mod oracles;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
