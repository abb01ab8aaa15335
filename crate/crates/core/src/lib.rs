//! Doubly-robust, cross-fitted estimation of treatment-specific survival
//! curves from right-censored observational data.
//!
//! The usual flow: load a [`survdata::Dataset`], split it with
//! [`survdata::make_folds`], train nuisances with
//! [`estimator::fit_nuisances`] (the survival and propensity ensembles live
//! in [`ensemble`]), then call [`estimator::estimate_curve`] for each arm and
//! hand the results to [`inference`] for intervals, bands, contrasts, RMST
//! and the equality test. [`simulation`] holds the data-generating design and
//! the Monte Carlo harness; [`cli`] is the `cfsurv` binary.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod hazard;
pub mod inference;
pub mod isotonic;
pub mod learners;
pub mod linalg;
pub mod plot;
pub mod simulation;
pub mod survdata;

pub use error::{Error, Result};
