//! Browser demo. Three operations, each returning JSON for the page in
//! `www/` to plot:
//!
//! * [`population_bounds`]: upper, range and variance bounds against the
//!   level for a linear CATE with uniform covariates.
//! * [`normal_effect`]: effect CVaR against the potential-outcome
//!   correlation when the CATE is constant.
//! * [`estimated_curve`]: a cross-fitted CVaR curve on a synthetic
//!   experiment, before and after rearrangement, next to the truth.
//!
//! The `*_json` wrappers are what JavaScript calls.

use effect_risk::bounds::RangeBoundParams;
use effect_risk::inference::{estimate_curve, CrossFit, Target};
use effect_risk::nuisance::{FoldMode, LearnerConfig};
use effect_risk::risk::{normal_cvar, AlphaLevel};
use effect_risk::simlab::{generate, DgpKind, DgpSpec, LinearCateParams, LinearUniform};
use effect_risk::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCurves {
    pub alpha: Vec<f64>,
    pub upper: Vec<f64>,
    pub mixture: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Population curves for `tau(X) = c0 + c1 X1 + c2 X2`, `X ~ U[0,1]^2`.
/// `b` bounds the effect around the CATE; `s2` bounds its conditional variance.
pub fn population_bounds(coef: [f64; 3], b: f64, s2: f64, points: usize) -> Result<BoundsCurves> {
    let dist = LinearUniform::new(&coef)?;
    let b = RangeBoundParams::new(b)?.get();
    if !(s2.is_finite() && s2 >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "variance bound s2 = {s2} must be finite and >= 0"
        )));
    }
    let alpha = grid(0.05, 1.0, points);
    let mut out = BoundsCurves {
        alpha: alpha.clone(),
        upper: vec![],
        mixture: vec![],
        variance: vec![],
    };
    for a in alpha {
        let a = AlphaLevel::new(a)?;
        out.upper.push(dist.cvar(a));
        out.mixture.push(dist.mixture_cvar(&[(0.5, -b), (0.5, b)], a));
        out.variance.push(dist.variance_bound(s2, a));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalCurve {
    pub rho: Vec<f64>,
    /// `CVaR_alpha(delta)` with `delta ~ N(ate, 2 - 2 rho)`.
    pub effect: Vec<f64>,
    /// Variance-restricted lower bound with the true `Var(delta)`.
    pub variance_bound: Vec<f64>,
    /// The CATE bound, constant in `rho`.
    pub upper: f64,
}

/// Unit-variance potential outcomes with correlation `rho` and no covariates.
pub fn normal_effect(ate: f64, alpha: f64, points: usize) -> Result<NormalCurve> {
    let a = AlphaLevel::new(alpha)?;
    let dist = LinearUniform::new(&[ate])?;
    let rho = grid(-1.0, 1.0, points);
    let mut effect = Vec::with_capacity(rho.len());
    let mut variance_bound = Vec::with_capacity(rho.len());
    for &r in &rho {
        let s2 = (2.0 - 2.0 * r).max(0.0);
        effect.push(normal_cvar(ate, s2.sqrt(), a)?);
        variance_bound.push(dist.variance_bound(s2, a));
    }
    Ok(NormalCurve {
        rho,
        effect,
        variance_bound,
        upper: dist.cvar(a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedCurve {
    pub alpha: Vec<f64>,
    pub raw: Vec<f64>,
    pub rearranged: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub truth: Vec<f64>,
    /// Levels dropped because `n * alpha` was too small.
    pub skipped: Vec<f64>,
}

/// Randomized experiment with `tau(x) = 0.5 + x1 - x2`, two folds, known
/// propensity 1/2 and OLS nuisances; 95% intervals.
pub fn estimated_curve(n: usize, seed: u64, points: usize) -> Result<EstimatedCurve> {
    let kind = DgpKind::LinearCate(LinearCateParams::default());
    let sample = generate(&DgpSpec {
        kind: kind.clone(),
        n,
        seed,
    })?;
    let learner = LearnerConfig::experimental(0.5);
    let cf = CrossFit::fit(&sample.table, &learner, 2, FoldMode::Shuffled, seed)?;
    let levels = grid(0.05, 1.0, points);
    let report = estimate_curve(&cf, &levels, |a| Target::Upper { alpha: a }, 0.95, true)?;
    let mut out = EstimatedCurve {
        alpha: vec![],
        raw: vec![],
        rearranged: vec![],
        ci_lo: vec![],
        ci_hi: vec![],
        truth: vec![],
        skipped: report.skipped.iter().map(|s| s.alpha).collect(),
    };
    for e in &report.entries {
        out.alpha.push(e.alpha);
        out.raw.push(e.psi_raw);
        out.rearranged.push(e.psi_hat);
        out.ci_lo.push(e.ci_lo);
        out.ci_hi.push(e.ci_hi);
        out.truth.push(kind.cate_cvar(AlphaLevel::new(e.alpha)?)?);
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn population_bounds_json(
    c0: f64,
    c1: f64,
    c2: f64,
    b: f64,
    s2: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    to_js(population_bounds([c0, c1, c2], b, s2, points))
}

#[wasm_bindgen]
pub fn normal_effect_json(ate: f64, alpha: f64, points: usize) -> std::result::Result<String, JsError> {
    to_js(normal_effect(ate, alpha, points))
}

#[wasm_bindgen]
pub fn estimated_curve_json(n: usize, seed: u64, points: usize) -> std::result::Result<String, JsError> {
    to_js(estimated_curve(n, seed, points))
}
