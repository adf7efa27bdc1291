//! Identified bounds on the CVaR of the individual treatment effect.
//!
//! Everything here is evaluated on a (possibly weighted) sample of CATE
//! values `tau(X_i)`, optionally paired with per-row bounds on the residual
//! effect variance `Var(delta | X_i)`. Population versions follow by passing
//! a large sample, or closed forms from [`crate::simlab`].

use serde::{Deserialize, Serialize};

use crate::optimize::golden_section_max;
use crate::risk::{empirical_cvar, AlphaLevel, SampleVec};
use crate::{Error, Result};

/// Absolute tolerance on the maximizer of the variance-bound objective.
pub const VARIANCE_BOUND_TOL: f64 = 1e-10;

/// CATE evaluations with optional residual-variance bounds aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct CateSample {
    tau: SampleVec,
    sigma2: Option<Vec<f64>>,
}

impl CateSample {
    pub fn new(tau: SampleVec) -> Self {
        Self { tau, sigma2: None }
    }

    pub fn from_values(tau: Vec<f64>) -> Result<Self> {
        Ok(Self::new(SampleVec::new(tau)?))
    }

    pub fn with_sigma2(tau: SampleVec, sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.len() != tau.len() {
            return Err(Error::invalid(format!(
                "{} variance bounds for {} CATE values",
                sigma2.len(),
                tau.len()
            )));
        }
        if sigma2.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("variance bounds must be finite and nonnegative"));
        }
        Ok(Self {
            tau,
            sigma2: Some(sigma2),
        })
    }

    pub fn tau(&self) -> &SampleVec {
        &self.tau
    }

    pub fn sigma2(&self) -> Option<&[f64]> {
        self.sigma2.as_deref()
    }

    fn require_sigma2(&self) -> Result<&[f64]> {
        self.sigma2
            .as_deref()
            .ok_or_else(|| Error::invalid("residual variance bounds are required"))
    }
}

/// Almost-sure bound `b` on the residual heterogeneity `|tau(X) - delta|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBoundParams(f64);

impl RangeBoundParams {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b >= 0.0 {
            Ok(Self(b))
        } else {
            Err(Error::invalid(format!("range bound b = {b} must be finite and >= 0")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Constant conditional correlation of the two potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec(f64);

impl CorrelationSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if (-1.0..=1.0).contains(&rho) {
            Ok(Self(rho))
        } else {
            Err(Error::invalid(format!("correlation {rho} not in [-1, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Tight upper bound: the CVaR of the CATE distribution.
pub fn upper_bound_cate_cvar(c: &CateSample, alpha: AlphaLevel) -> f64 {
    empirical_cvar(&c.tau, alpha)
}

/// Tight lower bound under `|tau(X) - delta| <= b`: the CVaR of the equal
/// mixture of `tau(X) - b` and `tau(X) + b`.
pub fn lower_bound_two_sided_range(c: &CateSample, p: RangeBoundParams, alpha: AlphaLevel) -> f64 {
    empirical_cvar(&c.tau.symmetric_spread(p.get()), alpha)
}

/// Lower bound under the one-sided restriction `tau(X) - delta <= b`.
pub fn lower_bound_one_sided_range(c: &CateSample, p: RangeBoundParams, alpha: AlphaLevel) -> f64 {
    upper_bound_cate_cvar(c, alpha) - p.get()
}

/// `u - sqrt(u^2 + s2)` without cancellation for large positive `u`.
#[inline]
pub(crate) fn soft_negative_part(u: f64, s2: f64) -> f64 {
    let r = (u * u + s2).sqrt();
    if u > 0.0 {
        if r == 0.0 {
            0.0
        } else {
            -s2 / (u + r)
        }
    } else {
        u - r
    }
}

/// Objective of the variance-restricted lower bound at a fixed `beta`:
/// `beta + E[tau - beta - sqrt((tau - beta)^2 + s2)] / (2 alpha)`.
pub fn variance_bound_objective(c: &CateSample, alpha: AlphaLevel, beta: f64) -> Result<f64> {
    let s2 = c.require_sigma2()?;
    Ok(variance_objective_raw(&c.tau, s2, alpha.get(), beta))
}

fn variance_objective_raw(tau: &SampleVec, s2: &[f64], alpha: f64, beta: f64) -> f64 {
    let tail: f64 = (0..tau.len())
        .map(|i| tau.weight(i) * soft_negative_part(tau.values()[i] - beta, s2[i]))
        .sum();
    beta + tail / (2.0 * alpha)
}

/// Search interval containing the maximizer of the variance-bound objective.
///
/// Row `i` alone is maximized at `tau_i - s_i (1 - 2a) / (2 sqrt(a (1 - a)))`;
/// the derivative of the averaged objective is positive left of every such
/// point and negative right of every such point.
pub fn variance_bound_bracket(tau: &[f64], sigma2: &[f64], alpha: f64) -> (f64, f64) {
    let slope = (1.0 - 2.0 * alpha) / (2.0 * (alpha * (1.0 - alpha)).sqrt());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (t, s2) in tau.iter().zip(sigma2) {
        let b = t - s2.sqrt() * slope;
        lo = lo.min(b);
        hi = hi.max(b);
    }
    (lo - 1.0, hi + 1.0)
}

/// Maximizer and value of the variance-restricted lower bound.
///
/// For `alpha = 1` the supremum is approached as `beta -> inf` and equals the
/// mean; the returned maximizer is then `f64::INFINITY`.
pub fn lower_bound_variance_argmax(c: &CateSample, alpha: AlphaLevel) -> Result<(f64, f64)> {
    let s2 = c.require_sigma2()?;
    let a = alpha.get();
    if a >= 1.0 {
        return Ok((f64::INFINITY, c.tau.mean()));
    }
    let (lo, hi) = variance_bound_bracket(c.tau.values(), s2, a);
    Ok(golden_section_max(
        |b| variance_objective_raw(&c.tau, s2, a, b),
        lo,
        hi,
        VARIANCE_BOUND_TOL,
    ))
}

/// Tight lower bound under `Var(delta | X) <= sigma2(X)`.
pub fn lower_bound_variance(c: &CateSample, alpha: AlphaLevel) -> Result<f64> {
    lower_bound_variance_argmax(c, alpha).map(|(_, v)| v)
}

/// `Var(delta | X)` from the two arm variances and their correlation,
/// clamped at zero against rounding.
pub fn variance_from_outcomes(var0: f64, var1: f64, rho: CorrelationSpec) -> Result<f64> {
    if !(var0 >= 0.0 && var1 >= 0.0) {
        return Err(Error::invalid("arm variances must be nonnegative"));
    }
    Ok((var0 + var1 - 2.0 * rho.get() * (var0 * var1).sqrt()).max(0.0))
}

/// Slack bound from the residual effect variance:
/// `E[sqrt(Var(delta | X))] / (2 alpha)`.
pub fn slack_from_effect_variance(c: &CateSample, alpha: AlphaLevel) -> Result<f64> {
    let s2 = c.require_sigma2()?;
    let m: f64 = (0..c.tau.len()).map(|i| c.tau.weight(i) * s2[i].sqrt()).sum();
    Ok(m / (2.0 * alpha.get()))
}

/// Slack bound from the arm variances:
/// `E[sd(Y | X, A = 0) + sd(Y | X, A = 1)] / (2 alpha)`.
pub fn slack_from_arm_variances(c: &CateSample, var0: &[f64], var1: &[f64], alpha: AlphaLevel) -> Result<f64> {
    let n = c.tau.len();
    if var0.len() != n || var1.len() != n {
        return Err(Error::invalid("arm variances must align with the CATE sample"));
    }
    if var0.iter().chain(var1).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("arm variances must be finite and nonnegative"));
    }
    let m: f64 = (0..n)
        .map(|i| c.tau.weight(i) * (var0[i].sqrt() + var1[i].sqrt()))
        .sum();
    Ok(m / (2.0 * alpha.get()))
}

/// Slack bound from per-arm root-mean-squared prediction errors:
/// `(rmse0 + rmse1) / (2 alpha)`.
pub fn slack_from_rmse(rmse0: f64, rmse1: f64, alpha: AlphaLevel) -> Result<f64> {
    if !(rmse0 >= 0.0 && rmse1 >= 0.0) || !rmse0.is_finite() || !rmse1.is_finite() {
        return Err(Error::invalid("rmse values must be finite and nonnegative"));
    }
    Ok((rmse0 + rmse1) / (2.0 * alpha.get()))
}

/// The three progressively looser bounds on `CVaR(tau) - CVaR(delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackBounds {
    pub effect_variance: f64,
    pub arm_variances: f64,
    pub rmse: f64,
}

/// All three slack bounds at once. `c` must carry residual variance bounds.
pub fn all_slack_bounds(
    c: &CateSample,
    alpha: AlphaLevel,
    var0: &[f64],
    var1: &[f64],
    rmse0: f64,
    rmse1: f64,
) -> Result<SlackBounds> {
    Ok(SlackBounds {
        effect_variance: slack_from_effect_variance(c, alpha)?,
        arm_variances: slack_from_arm_variances(c, var0, var1, alpha)?,
        rmse: slack_from_rmse(rmse0, rmse1, alpha)?,
    })
}

/// Average CATE among units between the `lo`- and `hi`-quantiles of CATE,
/// `(hi CVaR_hi - lo CVaR_lo) / (hi - lo)`. `hi = 1` is allowed.
pub fn interquantile_average(c: &CateSample, lo: AlphaLevel, hi: AlphaLevel) -> Result<f64> {
    let (a, b) = (lo.get(), hi.get());
    if a >= b {
        return Err(Error::invalid(format!("interquantile levels need {a} < {b}")));
    }
    let ca = empirical_cvar(&c.tau, lo);
    let cb = empirical_cvar(&c.tau, hi);
    Ok((b * cb - a * ca) / (b - a))
}

/// CVaR distributional treatment effect for binary outcomes:
/// `(m1 - 1 + a)_+ / a - (m0 - 1 + a)_+ / a`.
pub fn dte_cvar_binary(mean_y0: f64, mean_y1: f64, alpha: AlphaLevel) -> Result<f64> {
    if !(0.0..=1.0).contains(&mean_y0) || !(0.0..=1.0).contains(&mean_y1) {
        return Err(Error::invalid("binary outcome means must lie in [0, 1]"));
    }
    let a = alpha.get();
    let tail = |m: f64| (m - 1.0 + a).max(0.0) / a;
    Ok(tail(mean_y1) - tail(mean_y0))
}
