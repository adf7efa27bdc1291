//! Bounds and inference for the risk of heterogeneous treatment effects.
//!
//! The central quantity is the conditional value at risk (CVaR) of the
//! individual treatment effect: the average effect among the worst-affected
//! `alpha` fraction of a population. It is not identified from data, so the
//! crate works with identified bounds built from the conditional average
//! treatment effect (CATE):
//!
//! * [`risk`]: CVaR and quantile primitives on weighted finite samples.
//! * [`bounds`]: population-level upper and lower bound evaluators.
//! * [`nuisance`]: observation tables, fold plans, regressors and CATE learners.
//! * [`inference`]: the cross-fitted debiased estimator, its variants and
//!   confidence intervals.
//! * [`simlab`]: synthetic data with known ground truth, brute-force oracles
//!   and Monte Carlo coverage experiments.

pub mod bounds;
mod error;
pub mod inference;
pub mod nuisance;
pub mod optimize;
pub mod risk;
pub mod simlab;

pub use error::{Error, Result};
