//! Distribution-free CVaR and quantile primitives.
//!
//! CVaR is the lower-tail risk measure
//! `CVaR_a(Z) = sup_b { b + E[(Z - b)_-] / a }` with `(u)_- = min(u, 0)`.
//! The supremum is attained at the left-continuous `a`-quantile
//! `inf { b : F(b) >= a }`, so on a finite sample both reduce to a sort.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Slack used when comparing accumulated weights against a level.
pub(crate) const LEVEL_TOL: f64 = 1e-12;

/// A nonempty finite sample with optional probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVec {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl SampleVec {
    /// Uniformly weighted sample.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        Ok(Self { values, weights: None })
    }

    /// Weighted sample. Weights must be nonnegative and sum to one.
    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(values)?;
        if weights.len() != s.values.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} values",
                weights.len(),
                s.values.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight of observation `i`.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.values.len() as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.weights {
            Some(w) => self.values.iter().zip(w).map(|(v, w)| v * w).sum(),
            None => self.values.iter().sum::<f64>() / self.values.len() as f64,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Affine image `scale * z + shift` with the same weights.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| scale * v + shift).collect();
        match &self.weights {
            Some(w) => Self::weighted(values, w.clone()),
            None => Self::new(values),
        }
    }

    /// Equal mixture of `self - b` and `self + b`, as a weighted sample.
    pub fn symmetric_spread(&self, b: f64) -> Self {
        let n = self.values.len();
        let mut values = Vec::with_capacity(2 * n);
        let mut weights = Vec::with_capacity(2 * n);
        for i in 0..n {
            let w = 0.5 * self.weight(i);
            values.push(self.values[i] - b);
            weights.push(w);
            values.push(self.values[i] + b);
            weights.push(w);
        }
        Self {
            values,
            weights: Some(weights),
        }
    }

    /// (value, weight) pairs sorted by value.
    fn sorted(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = (0..self.values.len())
            .map(|i| (self.values[i], self.weight(i)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }
}

/// A level in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AlphaLevel(f64);

impl AlphaLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::invalid(format!("alpha {alpha} not in (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AlphaLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AlphaLevel> for f64 {
    fn from(a: AlphaLevel) -> f64 {
        a.0
    }
}

/// The map `alpha -> value` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    alphas: Vec<f64>,
    values: Vec<f64>,
}

impl RiskCurve {
    pub fn new(alphas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if alphas.len() != values.len() {
            return Err(Error::invalid("alpha grid and values differ in length"));
        }
        for a in &alphas {
            AlphaLevel::new(*a)?;
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("alpha grid must be strictly increasing"));
        }
        Ok(Self { alphas, values })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Left-continuous generalized inverse `inf { b : F(b) >= alpha }`.
///
/// Always returns an element of the sample.
pub fn empirical_quantile(s: &SampleVec, alpha: AlphaLevel) -> f64 {
    quantile_of_sorted(&s.sorted(), alpha.get())
}

fn quantile_of_sorted(pairs: &[(f64, f64)], alpha: f64) -> f64 {
    let mut cum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        // all atoms tied at v enter F(v) together
        while i < pairs.len() && pairs[i].0 == v {
            cum += pairs[i].1;
            i += 1;
        }
        if cum >= alpha - LEVEL_TOL {
            return v;
        }
    }
    pairs[pairs.len() - 1].0
}

/// Empirical CVaR at level `alpha`: the optimal value of the CVaR program,
/// evaluated at the empirical `alpha`-quantile.
pub fn empirical_cvar(s: &SampleVec, alpha: AlphaLevel) -> f64 {
    let pairs = s.sorted();
    let beta = quantile_of_sorted(&pairs, alpha.get());
    let tail: f64 = pairs
        .iter()
        .take_while(|(v, _)| *v < beta)
        .map(|(v, w)| w * (v - beta))
        .sum();
    beta + tail / alpha.get()
}

/// CVaR objective `b + E[(Z - b)_-] / alpha` at a fixed `b`.
pub fn cvar_objective(s: &SampleVec, alpha: AlphaLevel, beta: f64) -> f64 {
    let tail: f64 = (0..s.len()).map(|i| s.weight(i) * (s.values[i] - beta).min(0.0)).sum();
    beta + tail / alpha.get()
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Two-sided critical value `Phi^{-1}((1 + gamma) / 2)`.
pub fn two_sided_z(gamma: f64) -> f64 {
    normal_quantile((1.0 + gamma) / 2.0)
}

/// CVaR of `N(mu, sigma^2)`: `mu - sigma * pdf(q_alpha) / alpha`.
pub fn normal_cvar(mu: f64, sigma: f64, alpha: AlphaLevel) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::invalid("normal_cvar needs finite mu and sigma >= 0"));
    }
    let a = alpha.get();
    if a >= 1.0 {
        return Ok(mu);
    }
    Ok(mu - sigma * normal_pdf(normal_quantile(a)) / a)
}

/// Sort the values of a curve ascending, keeping its grid.
///
/// This is the monotone rearrangement of a curve known to be nondecreasing.
pub fn rearrange_monotone(c: &RiskCurve) -> RiskCurve {
    let mut values = c.values.clone();
    values.sort_by(f64::total_cmp);
    RiskCurve {
        alphas: c.alphas.clone(),
        values,
    }
}
