//! Reliability-oriented sensitivity analysis for rare failure events.

pub mod campaign;
pub mod config;
pub mod error;
pub mod indices;
pub mod maxent;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod smc;

pub use error::{Error, ModelError, Result};
