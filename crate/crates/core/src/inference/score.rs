//! Per-observation influence scores.

use crate::bounds::soft_negative_part;
use crate::nuisance::FoldNuisance;
use crate::risk::AlphaLevel;
use crate::{Error, Result};

/// Nuisance values of one row, evaluated with the nuisances of the fold
/// that holds the row out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowValues {
    pub a: u8,
    pub y: f64,
    pub e: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub tau: f64,
    /// `(Var(Y | X, A = 0), Var(Y | X, A = 1))` when fitted.
    pub var: Option<(f64, f64)>,
}

impl RowValues {
    pub fn evaluate(x: &[f64], a: u8, y: f64, nf: &FoldNuisance) -> Result<Self> {
        let e = (nf.e_hat)(x);
        if !(e >= nf.clip && e <= 1.0 - nf.clip) {
            return Err(Error::Internal(format!(
                "propensity {e} outside [{}, {}]",
                nf.clip,
                1.0 - nf.clip
            )));
        }
        let v = Self {
            a,
            y,
            e,
            mu0: (nf.mu_hat)(x, 0),
            mu1: (nf.mu_hat)(x, 1),
            tau: (nf.tau_hat)(x),
            var: nf.var_hat.as_ref().map(|v| (v(x, 0), v(x, 1))),
        };
        if ![v.mu0, v.mu1, v.tau].iter().all(|t| t.is_finite()) {
            return Err(Error::Internal("non-finite nuisance prediction".into()));
        }
        Ok(v)
    }

    fn mu_a(&self) -> f64 {
        if self.a == 1 {
            self.mu1
        } else {
            self.mu0
        }
    }

    /// Inverse-propensity weight `(A - e) / (e (1 - e))`.
    fn ipw(&self) -> f64 {
        (f64::from(self.a) - self.e) / (self.e * (1.0 - self.e))
    }

    /// Doubly robust effect pseudo-outcome
    /// `mu1 - mu0 + (A - e) / (e (1 - e)) (Y - mu(A))`.
    pub fn aipw(&self) -> f64 {
        self.mu1 - self.mu0 + self.ipw() * (self.y - self.mu_a())
    }
}

/// Score for the CVaR of the CATE at level `alpha` with quantile estimate
/// `beta`: `beta + 1{tau <= beta} (aipw - beta) / alpha`.
///
/// At `alpha = 1` every `beta` above the support is optimal and the score is
/// the doubly robust pseudo-outcome.
pub fn cvar_score(v: &RowValues, beta: f64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        v.aipw()
    } else if v.tau <= beta {
        beta + (v.aipw() - beta) / alpha
    } else {
        beta
    }
}

/// Score of row `(x, a, y)` under fold nuisances `nf` and quantile `beta`.
pub fn phi_score(x: &[f64], a: u8, y: f64, nf: &FoldNuisance, beta: f64, alpha: AlphaLevel) -> Result<f64> {
    Ok(cvar_score(&RowValues::evaluate(x, a, y, nf)?, beta, alpha.get()))
}

/// Score for the CVaR of the equal mixture of `tau - b` and `tau + b`.
pub fn mixture_score(v: &RowValues, beta: f64, b: f64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return v.aipw();
    }
    let psi = v.aipw();
    let plus = if v.tau + b <= beta {
        (psi + b - beta) / alpha
    } else {
        0.0
    };
    let minus = if v.tau - b <= beta {
        (psi - b - beta) / alpha
    } else {
        0.0
    };
    beta + 0.5 * (plus + minus)
}

/// Inputs of the variance-restricted score beyond the row values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTerms {
    /// Residual effect variance bound for the row.
    pub sigma2: f64,
    /// `Some(rho)` when `sigma2` was built from estimated arm variances and
    /// the first-order correction for that estimation should be added.
    pub correct_with_rho: Option<f64>,
}

/// Score for the variance-restricted lower bound at maximizer `beta`.
///
/// With `u = tau - beta` and `r = sqrt(u^2 + s2)` the score is
/// `beta + (u - r) / (2a) + (1 - u / r) (aipw - tau) / (2a)`, plus, for
/// estimated arm variances, `-(ds2/dv_A) ((Y - mu_A)^2 - v_A) / (4 a r P(A))`.
pub fn variance_score(v: &RowValues, beta: f64, terms: VarianceTerms, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return v.aipw();
    }
    let s2 = terms.sigma2;
    let u = v.tau - beta;
    let r = (u * u + s2).sqrt();
    // 1 - u / r, evaluated without cancellation; its limit from the left at r = 0
    let slope = if r == 0.0 {
        2.0
    } else if u > 0.0 {
        s2 / (r * (u + r))
    } else {
        1.0 - u / r
    };
    let mut phi = beta + (soft_negative_part(u, s2) + slope * (v.aipw() - v.tau)) / (2.0 * alpha);
    if let (Some(rho), Some((v0, v1)), true) = (terms.correct_with_rho, v.var, r > 0.0) {
        let (va, vother) = if v.a == 1 { (v1, v0) } else { (v0, v1) };
        let ratio = if va > 0.0 { (vother / va).sqrt() } else { 0.0 };
        let ds2 = 1.0 - rho * ratio;
        let p_a = if v.a == 1 { v.e } else { 1.0 - v.e };
        let resid = v.y - v.mu_a();
        phi -= ds2 * (resid * resid - va) / (4.0 * alpha * r * p_a);
    }
    phi
}
