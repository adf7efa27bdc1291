//! Synthetic data with known ground truth, exact population targets and a
//! Monte Carlo harness for the estimators.
//!
//! The DGPs include the constructions that attain the lower bounds: an
//! effect spread evenly by `+-b` around the CATE, and a skewed two-point
//! spread that approaches the one-sided bound.

mod closed_form;
mod coverage;
mod dgp;
mod oracle;

pub use closed_form::LinearUniform;
pub use coverage::{
    coverage_experiment, perturbed_coefficients, target_truth, CoverageResult, CoverageSummary, RepRecord, SimConfig,
    SimNuisance, SimTarget,
};
pub use dgp::{generate, DgpKind, DgpPropensity, DgpSpec, LinearCateParams, SyntheticSample, Truth};
pub use oracle::brute_force_cvar;
