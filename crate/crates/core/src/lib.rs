//! Split localized conformal prediction.
//!
//! Building blocks (conformal quantiles, weighted empirical CDFs, kernel
//! localizers, simple regressors), the conformal methods built from them,
//! evaluation metrics and synthetic data, and a config-driven experiment
//! runner.

// `!(x > 0.0)` is used on purpose so NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod localizer;
pub mod methods;
pub mod quantile;
pub mod regressors;
pub mod rng;

pub use data::{Dataset, Features};
pub use error::{Error, Result};
pub use quantile::{conformal_quantile, weighted_quantile, QuantileLevel, WeightedEmpiricalCdf};
