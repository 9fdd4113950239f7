pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod output;
pub mod payoff;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scheme;
pub mod special;
pub mod summation;

pub use error::{Error, Result};
