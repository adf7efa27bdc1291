//! Monte Carlo evaluation of the estimators on synthetic data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, DgpKind, DgpSpec, LinearCateParams, SyntheticSample};
use crate::bounds::{CorrelationSpec, RangeBoundParams};
use crate::inference::{partial_id_interval, CrossFit, SigmaSource, Target};
use crate::nuisance::{arm_fn, covariate_fn, FoldMode, LearnerConfig, NuisanceLearner, OracleNuisance};
use crate::risk::AlphaLevel;
use crate::{Error, Result};

/// Which nuisances the estimator uses in each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimNuisance {
    /// The true `e`, `mu`, `tau` and arm variances.
    Oracle,
    /// True `e` and `tau` with `mu = 0`.
    ZeroOutcome,
    /// True `e`, `mu = 0` and the linear CATE with coefficient `j`
    /// multiplied by `1 + perturbation (-1)^j`.
    WrongCate { perturbation: f64 },
    /// Nuisances fitted from the data.
    Learner(LearnerConfig),
}

/// The estimand of the experiment and the truth it is judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimTarget {
    /// `CVaR_alpha(tau(X))`.
    Upper,
    /// `CVaR_hi(tau(X)) - CVaR_alpha(tau(X))`.
    Difference { alpha_hi: f64 },
    /// Two-sided range lower bound with the given `b`.
    LowerMixture { b: f64 },
    /// Variance-restricted lower bound with a known constant bound.
    LowerVariance { sigma2: f64 },
    /// Variance-restricted bound from the nuisances' arm variances.
    LowerVarianceFitted { rho: f64 },
    /// Union-bound interval from the mixture lower bound and the upper
    /// bound, judged against the CVaR of the individual effect.
    PartialIdentification { b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub fold_mode: FoldMode,
    pub nuisance: SimNuisance,
    pub target: SimTarget,
    pub reps: usize,
}

fn default_gamma() -> f64 {
    0.9
}

fn default_folds() -> usize {
    5
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub truth: f64,
    pub psi_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    /// `psi_hat >= truth - 2 se`.
    pub valid: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub reps: usize,
    pub failures: usize,
    pub truth: f64,
    pub coverage: f64,
    pub mean_bias: f64,
    pub median_abs_error: f64,
    pub median_width: f64,
    pub median_se: f64,
    pub validity_fraction: f64,
}

/// Per-replication records and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub records: Vec<RepRecord>,
    pub summary: CoverageSummary,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        AlphaLevel::new(self.alpha)?;
        if self.reps < 100 {
            return Err(Error::invalid("a coverage experiment needs at least 100 replications"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma must lie in (0, 1)"));
        }
        match &self.target {
            SimTarget::Difference { alpha_hi } => {
                if AlphaLevel::new(*alpha_hi)?.get() < self.alpha {
                    return Err(Error::invalid("alpha_hi must be at least alpha"));
                }
            }
            SimTarget::LowerMixture { b } | SimTarget::PartialIdentification { b } => {
                RangeBoundParams::new(*b)?;
            }
            SimTarget::LowerVariance { sigma2 } => {
                if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                    return Err(Error::invalid("sigma2 must be finite and nonnegative"));
                }
            }
            SimTarget::LowerVarianceFitted { rho } => {
                CorrelationSpec::new(*rho)?;
            }
            SimTarget::Upper => {}
        }
        if let SimNuisance::Learner(l) = &self.nuisance {
            l.validate()?;
        }
        Ok(())
    }
}

/// Population value of the configured estimand.
pub fn target_truth(kind: &DgpKind, cfg: &SimConfig) -> Result<f64> {
    let a = AlphaLevel::new(cfg.alpha)?;
    match &cfg.target {
        SimTarget::Upper => kind.cate_cvar(a),
        SimTarget::Difference { alpha_hi } => Ok(kind.cate_cvar(AlphaLevel::new(*alpha_hi)?)? - kind.cate_cvar(a)?),
        SimTarget::LowerMixture { b } => kind.mixture_bound(a, *b),
        SimTarget::LowerVariance { sigma2 } => kind.variance_bound(a, *sigma2),
        SimTarget::LowerVarianceFitted { rho } => {
            let (v0, v1) = constant_arm_variances(kind)?;
            let s2 = crate::bounds::variance_from_outcomes(v0, v1, CorrelationSpec::new(*rho)?)?;
            kind.variance_bound(a, s2)
        }
        SimTarget::PartialIdentification { .. } => kind.ite_cvar(a),
    }
}

fn constant_arm_variances(kind: &DgpKind) -> Result<(f64, f64)> {
    match kind {
        DgpKind::LinearCate(p) => Ok((p.noise * p.noise, p.noise * p.noise)),
        DgpKind::BivariateNormal { .. } => Ok((1.0, 1.0)),
        _ => Err(Error::invalid(
            "fitted-variance truth is only available for homoskedastic designs",
        )),
    }
}

/// `coef[j] (1 + perturbation (-1)^j)`.
pub fn perturbed_coefficients(base: &LinearCateParams, perturbation: f64) -> Vec<f64> {
    base.coef
        .iter()
        .enumerate()
        .map(|(j, c)| c * (1.0 + perturbation * if j % 2 == 0 { 1.0 } else { -1.0 }))
        .collect()
}

fn learner_for(kind: &DgpKind, sample: &SyntheticSample, nuisance: &SimNuisance) -> Result<Box<dyn NuisanceLearner>> {
    let t = &sample.truth;
    Ok(match nuisance {
        SimNuisance::Oracle => Box::new(t.oracle()),
        SimNuisance::ZeroOutcome => Box::new(
            OracleNuisance::new(t.e.clone(), arm_fn(|_, _| 0.0), t.tau.clone()).with_label("true e and tau, mu = 0"),
        ),
        SimNuisance::WrongCate { perturbation } => {
            let base = match kind {
                DgpKind::LinearCate(p)
                | DgpKind::EqualMixtureTight { base: p, .. }
                | DgpKind::SkewedTwoPoint { base: p, .. } => p,
                DgpKind::BivariateNormal { .. } => return Err(Error::invalid("a wrong CATE needs covariates")),
            };
            let coef = perturbed_coefficients(base, *perturbation);
            let tau = covariate_fn(move |x: &[f64]| coef[0] + coef[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>());
            Box::new(
                OracleNuisance::new(t.e.clone(), arm_fn(|_, _| 0.0), tau).with_label("true e, perturbed tau, mu = 0"),
            )
        }
        SimNuisance::Learner(l) => Box::new(l.clone()),
    })
}

fn run_rep(spec: &DgpSpec, cfg: &SimConfig, rep: usize, truth: f64) -> RepRecord {
    let seed = spec.seed.wrapping_add(rep as u64);
    let mut rec = RepRecord {
        rep,
        seed,
        truth,
        psi_hat: None,
        se: None,
        ci_lo: None,
        ci_hi: None,
        covered: None,
        valid: None,
        error: None,
    };
    match estimate_rep(spec, cfg, seed) {
        Ok((psi, se, lo, hi)) => {
            rec.psi_hat = Some(psi);
            rec.se = Some(se);
            rec.ci_lo = Some(lo);
            rec.ci_hi = Some(hi);
            rec.covered = Some(lo <= truth && truth <= hi);
            rec.valid = Some(psi >= truth - 2.0 * se);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn estimate_rep(spec: &DgpSpec, cfg: &SimConfig, seed: u64) -> Result<(f64, f64, f64, f64)> {
    let sample = generate(&DgpSpec { seed, ..spec.clone() })?;
    let learner = learner_for(&spec.kind, &sample, &cfg.nuisance)?;
    let cf = CrossFit::fit(&sample.table, learner.as_ref(), cfg.folds, cfg.fold_mode, seed)?;
    let alpha = AlphaLevel::new(cfg.alpha)?;
    let target = match &cfg.target {
        SimTarget::Upper => Target::Upper { alpha },
        SimTarget::Difference { alpha_hi } => Target::Difference {
            lo: alpha,
            hi: AlphaLevel::new(*alpha_hi)?,
        },
        SimTarget::LowerMixture { b } => Target::LowerMixture {
            alpha,
            b: RangeBoundParams::new(*b)?,
        },
        SimTarget::LowerVariance { sigma2 } => {
            let s2 = *sigma2;
            Target::LowerVariance {
                alpha,
                sigma: SigmaSource::Known(covariate_fn(move |_| s2)),
            }
        }
        SimTarget::LowerVarianceFitted { rho } => Target::LowerVariance {
            alpha,
            sigma: SigmaSource::ArmVariances(CorrelationSpec::new(*rho)?),
        },
        SimTarget::PartialIdentification { b } => {
            let lower = cf.report(
                &Target::LowerMixture {
                    alpha,
                    b: RangeBoundParams::new(*b)?,
                },
                cfg.gamma,
            )?;
            let upper = cf.report(&Target::Upper { alpha }, cfg.gamma)?;
            let (lo, hi) = partial_id_interval(&lower, &upper, cfg.gamma)?;
            return Ok((upper.psi_hat, upper.se, lo, hi));
        }
    };
    let r = cf.report(&target, cfg.gamma)?;
    Ok((r.psi_hat, r.se, r.ci_lo, r.ci_hi))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Run `cfg.reps` replications; replication `r` draws its data with seed
/// `spec.seed + r`. Failed replications are recorded and excluded from the
/// summary statistics.
pub fn coverage_experiment(spec: &DgpSpec, cfg: &SimConfig) -> Result<CoverageResult> {
    spec.validate()?;
    cfg.validate()?;
    let truth = target_truth(&spec.kind, cfg)?;
    let records: Vec<RepRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(spec, cfg, r, truth))
        .collect();
    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let m = ok.len() as f64;
    let frac = |f: &dyn Fn(&RepRecord) -> bool| ok.iter().filter(|r| f(r)).count() as f64 / m;
    let summary = CoverageSummary {
        reps: cfg.reps,
        failures: records.len() - ok.len(),
        truth,
        coverage: frac(&|r| r.covered == Some(true)),
        mean_bias: ok.iter().map(|r| r.psi_hat.unwrap() - truth).sum::<f64>() / m,
        median_abs_error: median(ok.iter().map(|r| (r.psi_hat.unwrap() - truth).abs()).collect()),
        median_width: median(ok.iter().map(|r| r.ci_hi.unwrap() - r.ci_lo.unwrap()).collect()),
        median_se: median(ok.iter().map(|r| r.se.unwrap()).collect()),
        validity_fraction: frac(&|r| r.valid == Some(true)),
    };
    Ok(CoverageResult { records, summary })
}
