//! Data-generating processes with latent potential outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::closed_form::LinearUniform;
use crate::bounds::{CorrelationSpec, RangeBoundParams};
use crate::nuisance::{arm_fn, covariate_fn, ArmFn, CovariateFn, ObservationTable, OracleNuisance};
use crate::risk::{normal_cvar, AlphaLevel};
use crate::{Error, Result};

/// Treatment assignment mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpPropensity {
    Constant(f64),
    /// `e(x) = 1 / (1 + exp(-(intercept + slope' x)))`.
    Logistic {
        intercept: f64,
        slope: Vec<f64>,
    },
}

impl DgpPropensity {
    fn func(&self) -> CovariateFn {
        match self.clone() {
            DgpPropensity::Constant(e) => covariate_fn(move |_| e),
            DgpPropensity::Logistic { intercept, slope } => covariate_fn(move |x: &[f64]| {
                let eta = intercept + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>();
                1.0 / (1.0 + (-eta).exp())
            }),
        }
    }
}

/// `X ~ U[0,1]^d`, `tau(x) = coef' [1, x]`,
/// `mu(x, 0) = sin(2 pi x_1) + sum_{j >= 2} x_j^2` and Gaussian noise of
/// standard deviation `noise` on each potential outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCateParams {
    pub d: usize,
    pub coef: Vec<f64>,
    pub noise: f64,
    pub propensity: DgpPropensity,
}

impl Default for LinearCateParams {
    fn default() -> Self {
        Self {
            d: 2,
            coef: vec![0.5, 1.0, -1.0],
            noise: 1.0,
            propensity: DgpPropensity::Constant(0.5),
        }
    }
}

impl LinearCateParams {
    fn validate(&self) -> Result<()> {
        if self.coef.len() != self.d + 1 {
            return Err(Error::invalid(format!(
                "linear CATE needs d + 1 = {} coefficients, got {}",
                self.d + 1,
                self.coef.len()
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid("noise must be finite and nonnegative"));
        }
        match &self.propensity {
            DgpPropensity::Constant(e) if !(*e > 0.0 && *e < 1.0) => {
                Err(Error::invalid("constant propensity must lie in (0, 1)"))
            }
            DgpPropensity::Logistic { slope, .. } if slope.len() != self.d => {
                Err(Error::invalid("logistic propensity needs one slope per covariate"))
            }
            _ => Ok(()),
        }
    }

    pub fn tau(&self) -> CovariateFn {
        let coef = self.coef.clone();
        covariate_fn(move |x: &[f64]| coef[0] + coef[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>())
    }

    pub fn mu0(&self) -> CovariateFn {
        covariate_fn(|x: &[f64]| match x.split_first() {
            Some((x1, rest)) => (2.0 * std::f64::consts::PI * x1).sin() + rest.iter().map(|v| v * v).sum::<f64>(),
            None => 0.0,
        })
    }

    /// Distribution of `tau(X)`.
    pub fn tau_distribution(&self) -> Result<LinearUniform> {
        LinearUniform::new(&self.coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    /// No covariates; `(Y(0), Y(1))` standard bivariate normal around
    /// `(mu0, mu1)` with correlation `rho`, so `delta ~ N(mu1 - mu0, 2 - 2 rho)`.
    BivariateNormal {
        mu0: f64,
        mu1: f64,
        rho: f64,
    },
    LinearCate(LinearCateParams),
    /// `delta = tau(X) - b` or `tau(X) + b` with probability 1/2 each; the
    /// two-sided range bound is attained.
    EqualMixtureTight {
        base: LinearCateParams,
        b: f64,
    },
    /// `delta = tau(X) - b` with probability `q`, else `tau(X) + q b / (1 - q)`.
    SkewedTwoPoint {
        base: LinearCateParams,
        b: f64,
        q: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

/// Ground truth behind a synthetic table.
#[derive(Clone)]
pub struct Truth {
    pub tau: CovariateFn,
    pub e: CovariateFn,
    pub mu: ArmFn,
    /// `Var(Y | X, A = a)`.
    pub var: ArmFn,
    pub tau_values: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Individual effects `y1 - y0`.
    pub ite: Vec<f64>,
}

impl Truth {
    /// The true nuisances as a learner.
    pub fn oracle(&self) -> OracleNuisance {
        OracleNuisance::new(self.e.clone(), self.mu.clone(), self.tau.clone()).with_variance(self.var.clone())
    }
}

#[derive(Clone)]
pub struct SyntheticSample {
    pub table: ObservationTable,
    pub truth: Truth,
}

impl DgpKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            DgpKind::BivariateNormal { mu0, mu1, rho } => {
                CorrelationSpec::new(*rho)?;
                if !mu0.is_finite() || !mu1.is_finite() {
                    return Err(Error::invalid("means must be finite"));
                }
                Ok(())
            }
            DgpKind::LinearCate(p) => p.validate(),
            DgpKind::EqualMixtureTight { base, b } => {
                RangeBoundParams::new(*b)?;
                base.validate()
            }
            DgpKind::SkewedTwoPoint { base, b, q } => {
                RangeBoundParams::new(*b)?;
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::invalid("q must lie in (0, 1)"));
                }
                base.validate()
            }
        }
    }

    /// Number of covariates.
    pub fn d(&self) -> usize {
        match self {
            DgpKind::BivariateNormal { .. } => 0,
            DgpKind::LinearCate(p)
            | DgpKind::EqualMixtureTight { base: p, .. }
            | DgpKind::SkewedTwoPoint { base: p, .. } => p.d,
        }
    }

    fn base(&self) -> Option<&LinearCateParams> {
        match self {
            DgpKind::BivariateNormal { .. } => None,
            DgpKind::LinearCate(p)
            | DgpKind::EqualMixtureTight { base: p, .. }
            | DgpKind::SkewedTwoPoint { base: p, .. } => Some(p),
        }
    }

    /// Distribution of `tau(X)`.
    pub fn tau_distribution(&self) -> Result<LinearUniform> {
        match self {
            DgpKind::BivariateNormal { mu0, mu1, .. } => LinearUniform::new(&[mu1 - mu0]),
            _ => self.base().unwrap().tau_distribution(),
        }
    }

    /// `CVaR_alpha(tau(X))`.
    pub fn cate_cvar(&self, alpha: AlphaLevel) -> Result<f64> {
        Ok(self.tau_distribution()?.cvar(alpha))
    }

    /// `CVaR_alpha(delta)`.
    pub fn ite_cvar(&self, alpha: AlphaLevel) -> Result<f64> {
        match self {
            DgpKind::BivariateNormal { mu0, mu1, rho } => {
                normal_cvar(mu1 - mu0, (2.0 - 2.0 * rho).max(0.0).sqrt(), alpha)
            }
            DgpKind::LinearCate(_) => Err(Error::invalid(
                "the effect distribution of the linear CATE model has no closed form",
            )),
            DgpKind::EqualMixtureTight { base, b } => {
                Ok(base.tau_distribution()?.mixture_cvar(&[(0.5, -b), (0.5, *b)], alpha))
            }
            DgpKind::SkewedTwoPoint { base, b, q } => Ok(base
                .tau_distribution()?
                .mixture_cvar(&[(*q, -b), (1.0 - q, q * b / (1.0 - q))], alpha)),
        }
    }

    /// Population two-sided range lower bound with parameter `b`.
    pub fn mixture_bound(&self, alpha: AlphaLevel, b: f64) -> Result<f64> {
        Ok(self.tau_distribution()?.mixture_cvar(&[(0.5, -b), (0.5, b)], alpha))
    }

    /// Population variance-restricted lower bound with constant `s2`.
    pub fn variance_bound(&self, alpha: AlphaLevel, s2: f64) -> Result<f64> {
        Ok(self.tau_distribution()?.variance_bound(s2, alpha))
    }

    /// Arm outcome variance `Var(Y | X, A = a)`.
    fn arm_variance(&self) -> ArmFn {
        match self {
            DgpKind::BivariateNormal { .. } => arm_fn(|_, _| 1.0),
            DgpKind::LinearCate(p) => {
                let s2 = p.noise * p.noise;
                arm_fn(move |_, _| s2)
            }
            DgpKind::EqualMixtureTight { base, b } => {
                let (s2, b2) = (base.noise * base.noise, b * b);
                arm_fn(move |_, a| if a == 1 { s2 + b2 } else { s2 })
            }
            DgpKind::SkewedTwoPoint { base, b, q } => {
                // Var of the two-point effect: q (1 - q) (b / (1 - q))^2
                let (s2, extra) = (base.noise * base.noise, q * b * b / (1.0 - q));
                arm_fn(move |_, a| if a == 1 { s2 + extra } else { s2 })
            }
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("no rows"));
        }
        self.kind.validate()
    }
}

/// Draw a sample. Deterministic given `spec.seed`.
pub fn generate(spec: &DgpSpec) -> Result<SyntheticSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let d = spec.kind.d();
    let (tau, e, mu0): (CovariateFn, CovariateFn, CovariateFn) = match &spec.kind {
        DgpKind::BivariateNormal { mu0, mu1, .. } => {
            let (m0, t) = (*mu0, mu1 - mu0);
            (
                covariate_fn(move |_| t),
                covariate_fn(|_| 0.5),
                covariate_fn(move |_| m0),
            )
        }
        _ => {
            let p = spec.kind.base().unwrap();
            (p.tau(), p.propensity.func(), p.mu0())
        }
    };
    let mut x = Vec::with_capacity(n * d);
    let (mut a, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut y0s, mut y1s, mut taus) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let t = tau(&row);
        let m0 = mu0(&row);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let (y0, y1) = match &spec.kind {
            DgpKind::BivariateNormal { rho, .. } => {
                (m0 + z0, m0 + t + rho * z0 + (1.0 - rho * rho).max(0.0).sqrt() * z1)
            }
            DgpKind::LinearCate(p) => (m0 + p.noise * z0, m0 + t + p.noise * z1),
            DgpKind::EqualMixtureTight { base, b } => {
                let y0 = m0 + base.noise * z0;
                let delta = if rng.random::<bool>() { t + b } else { t - b };
                (y0, y0 + delta)
            }
            DgpKind::SkewedTwoPoint { base, b, q } => {
                let y0 = m0 + base.noise * z0;
                let delta = if rng.random::<f64>() < *q {
                    t - b
                } else {
                    t + q * b / (1.0 - q)
                };
                (y0, y0 + delta)
            }
        };
        let treat = u8::from(rng.random::<f64>() < e(&row));
        x.extend_from_slice(&row);
        a.push(treat);
        y.push(if treat == 1 { y1 } else { y0 });
        y0s.push(y0);
        y1s.push(y1);
        taus.push(t);
    }
    let ite = y1s.iter().zip(&y0s).map(|(a, b)| a - b).collect();
    let (t2, m2) = (tau.clone(), mu0.clone());
    let mu = arm_fn(move |x, a| m2(x) + f64::from(a) * t2(x));
    Ok(SyntheticSample {
        table: ObservationTable::new(d, x, a, y)?,
        truth: Truth {
            tau,
            e,
            mu,
            var: spec.kind.arm_variance(),
            tau_values: taus,
            y0: y0s,
            y1: y1s,
            ite,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{lower_bound_two_sided_range, CateSample};
    use crate::risk::{empirical_cvar, SampleVec};

    fn al(a: f64) -> AlphaLevel {
        AlphaLevel::new(a).unwrap()
    }

    fn linear(n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            kind: DgpKind::LinearCate(LinearCateParams::default()),
            n,
            seed,
        }
    }

    #[test]
    fn reproducible() {
        let a = generate(&linear(500, 7)).unwrap();
        let b = generate(&linear(500, 7)).unwrap();
        let c = generate(&linear(500, 8)).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.truth.ite, b.truth.ite);
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn perfectly_correlated_normals_have_zero_effects() {
        let s = generate(&DgpSpec {
            kind: DgpKind::BivariateNormal {
                mu0: 0.0,
                mu1: 0.0,
                rho: 1.0,
            },
            n: 100,
            seed: 1,
        })
        .unwrap();
        assert!(s.truth.ite.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn anticorrelated_normals_reach_example_constant() {
        let kind = DgpKind::BivariateNormal {
            mu0: 0.0,
            mu1: 0.0,
            rho: -1.0,
        };
        let s = generate(&DgpSpec {
            kind: kind.clone(),
            n: 400_000,
            seed: 2,
        })
        .unwrap();
        let c = empirical_cvar(&SampleVec::new(s.truth.ite).unwrap(), al(0.1));
        assert!((c - (-3.51)).abs() < 0.03, "{c}");
        assert!((kind.ite_cvar(al(0.1)).unwrap() - (-3.51)).abs() < 0.01);
    }

    #[test]
    fn tight_mixture_attains_two_sided_bound() {
        let kind = DgpKind::EqualMixtureTight {
            base: LinearCateParams::default(),
            b: 1.0,
        };
        let s = generate(&DgpSpec {
            kind,
            n: 200_000,
            seed: 3,
        })
        .unwrap();
        let ite = empirical_cvar(&SampleVec::new(s.truth.ite.clone()).unwrap(), al(0.2));
        let c = CateSample::from_values(s.truth.tau_values.clone()).unwrap();
        let bound = lower_bound_two_sided_range(&c, RangeBoundParams::new(1.0).unwrap(), al(0.2));
        assert!((ite - bound).abs() < 0.02, "{ite} vs {bound}");
    }

    #[test]
    fn effects_average_to_cate() {
        // regress delta on [1, x]: coefficients recover the CATE
        for kind in [
            DgpKind::LinearCate(LinearCateParams::default()),
            DgpKind::EqualMixtureTight {
                base: LinearCateParams::default(),
                b: 2.0,
            },
            DgpKind::SkewedTwoPoint {
                base: LinearCateParams::default(),
                b: 1.0,
                q: 0.8,
            },
        ] {
            let s = generate(&DgpSpec {
                kind,
                n: 100_000,
                seed: 4,
            })
            .unwrap();
            let fit = crate::nuisance::RegressorSpec::ols()
                .fit(s.table.x(), 2, &s.truth.ite)
                .unwrap();
            let c = fit.linear_coefficients().unwrap();
            for (got, want) in c.iter().zip(&LinearCateParams::default().coef) {
                assert!((got - want).abs() < 0.1, "{c:?}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            DgpKind::BivariateNormal {
                mu0: 0.0,
                mu1: 0.0,
                rho: 1.5,
            },
            DgpKind::LinearCate(LinearCateParams {
                coef: vec![1.0],
                ..LinearCateParams::default()
            }),
            DgpKind::SkewedTwoPoint {
                base: LinearCateParams::default(),
                b: 1.0,
                q: 1.0,
            },
            DgpKind::EqualMixtureTight {
                base: LinearCateParams::default(),
                b: -1.0,
            },
        ];
        for kind in bad {
            assert!(generate(&DgpSpec { kind, n: 10, seed: 0 }).is_err());
        }
    }

    #[test]
    fn logistic_propensity_is_used() {
        let p = LinearCateParams {
            propensity: DgpPropensity::Logistic {
                intercept: -1.0,
                slope: vec![2.0, 0.0],
            },
            ..LinearCateParams::default()
        };
        let s = generate(&DgpSpec {
            kind: DgpKind::LinearCate(p),
            n: 20_000,
            seed: 5,
        })
        .unwrap();
        let treated_low = (0..s.table.n())
            .filter(|&i| s.table.row(i)[0] < 0.2)
            .map(|i| f64::from(s.table.treatment(i)))
            .collect::<Vec<_>>();
        let rate = treated_low.iter().sum::<f64>() / treated_low.len() as f64;
        // e ranges over [0.27, 0.35] on x1 < 0.2
        assert!((rate - 0.31).abs() < 0.03, "{rate}");
    }
}
