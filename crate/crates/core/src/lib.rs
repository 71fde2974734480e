pub mod baselines;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod mtp;
pub mod nnls;
pub mod persistence;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod selftest;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
