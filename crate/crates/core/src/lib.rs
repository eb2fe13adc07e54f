//! Error-variance estimation for the high-dimensional linear model.

pub mod data_gen;
pub mod error;
pub mod harness;
pub mod estimators;
pub mod rng;
pub mod model_selection;
pub mod orthogonal;
pub mod solvers;

pub use error::{Error, Result};
