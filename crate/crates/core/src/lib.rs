//! Survival and ruin probabilities for the annuity-payments model with a
//! risky investment.

pub mod error;
pub mod exec;
pub mod grid;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod tail;
pub mod volterra;
pub mod assembly;
pub mod config;
pub mod mc;

pub use error::{Error, Result};
