//! Forecasting the next `H` values of a series from its last `M` values with
//! three linear-Gaussian estimators: the unconditional mean, the Gauss-Bayes
//! conditional mean, and a reduced-dimension conditional mean that first
//! resolves the observation onto a principal subspace of the covariance.
//!
//! The crate also carries a backtesting harness (out-of-sample MSE,
//! directional statistic, forecast volatility, condition numbers) and a
//! Monte-Carlo oracle for checking the closed-form quantities.

pub mod backtest;
pub mod cli;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use covariance::{choose_subspace, condition_number, empirical_covariance, CovarianceModel, Subspace};
pub use error::{Error, Result};
pub use estimators::{
    build_projection, fit_gauss_bayes, fit_reduced_dimension, fit_unconditional, Estimator, Method,
    ProjectionOperator,
};
pub use pipeline::{DataMatrix, PriceSeries, WindowConfig};
