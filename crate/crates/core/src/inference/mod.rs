//! Debiased cross-fitted estimation of CATE-CVaR, its level comparisons and
//! the lower bounds on the CVaR of individual effects.
//!
//! Every estimator follows the same recipe: fit nuisances on the complement
//! of each fold ([`CrossFit`]), estimate the fold's quantile from the
//! training rows' CATE predictions, score the held-out rows, then average
//! the scores and use their spread for a normal confidence interval.

mod crossfit;
mod curve;
mod score;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    lower_bound_variance_argmax, slack_from_rmse, variance_from_outcomes, CateSample, CorrelationSpec, RangeBoundParams,
};
use crate::nuisance::{cross_validated_rmse, CovariateFn, FoldMode, NuisanceLearner, ObservationTable, RegressorSpec};
use crate::risk::{empirical_quantile, two_sided_z, AlphaLevel, SampleVec};
use crate::{Error, Result};

pub use crossfit::{CrossFit, FoldFit};
pub use curve::{estimate_curve, CurveEntry, RiskReport, SkippedLevel, SCHEMA_VERSION};
pub use score::{cvar_score, mixture_score, phi_score, variance_score, RowValues, VarianceTerms};

/// Smallest allowed `n * alpha`.
pub const MIN_TAIL_COUNT: f64 = 10.0;

/// Where the residual effect variance bound `sigma2(x)` comes from.
#[derive(Clone)]
pub enum SigmaSource {
    /// A user-supplied function of the covariates.
    Known(CovariateFn),
    /// `v0 + v1 - 2 rho sqrt(v0 v1)` from the learner's arm variances.
    ArmVariances(CorrelationSpec),
}

impl std::fmt::Debug for SigmaSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaSource::Known(_) => write!(f, "Known(..)"),
            SigmaSource::ArmVariances(r) => write!(f, "ArmVariances({})", r.get()),
        }
    }
}

/// An estimand.
#[derive(Debug, Clone)]
pub enum Target {
    /// `CVaR_alpha(tau(X))`, the upper bound on the CVaR of the effect.
    Upper { alpha: AlphaLevel },
    /// `CVaR_hi(tau(X)) - CVaR_lo(tau(X))`.
    Difference { lo: AlphaLevel, hi: AlphaLevel },
    /// Average CATE between its `lo`- and `hi`-quantiles.
    Interquantile { lo: AlphaLevel, hi: AlphaLevel },
    /// `CVaR_alpha(tau(X)) - constant`.
    LowerShift { alpha: AlphaLevel, constant: f64 },
    /// CVaR of the equal mixture of `tau(X) - b` and `tau(X) + b`.
    LowerMixture { alpha: AlphaLevel, b: RangeBoundParams },
    /// Lower bound under `Var(delta | X) <= sigma2(X)`.
    LowerVariance { alpha: AlphaLevel, sigma: SigmaSource },
}

impl Target {
    /// The smallest level involved.
    pub fn alpha(&self) -> AlphaLevel {
        match self {
            Target::Upper { alpha }
            | Target::LowerShift { alpha, .. }
            | Target::LowerMixture { alpha, .. }
            | Target::LowerVariance { alpha, .. } => *alpha,
            Target::Difference { lo, .. } | Target::Interquantile { lo, .. } => *lo,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Target::Difference { lo, hi } if lo.get() > hi.get() => {
                return Err(Error::invalid(format!(
                    "level difference needs {} <= {}",
                    lo.get(),
                    hi.get()
                )))
            }
            Target::Interquantile { lo, hi } if lo.get() >= hi.get() => {
                return Err(Error::invalid(format!(
                    "interquantile levels need {} < {}",
                    lo.get(),
                    hi.get()
                )))
            }
            Target::LowerShift { constant, .. } if !constant.is_finite() => {
                return Err(Error::invalid("shift constant must be finite"))
            }
            _ => {}
        }
        let a = self.alpha().get();
        if (n as f64) * a < MIN_TAIL_COUNT {
            return Err(Error::invalid(format!(
                "alpha too small for n: n * alpha = {} < {MIN_TAIL_COUNT}",
                n as f64 * a
            )));
        }
        Ok(())
    }

    fn tag(&self, variance_estimated: bool) -> VariantTag {
        match self {
            Target::Upper { .. } => VariantTag::Upper,
            Target::Difference { hi, .. } => VariantTag::Difference { alpha_hi: hi.get() },
            Target::Interquantile { hi, .. } => VariantTag::Interquantile { alpha_hi: hi.get() },
            Target::LowerShift { constant, .. } => VariantTag::LowerShift { constant: *constant },
            Target::LowerMixture { b, .. } => VariantTag::LowerMixture { b: b.get() },
            Target::LowerVariance { sigma, .. } => match sigma {
                SigmaSource::Known(_) => VariantTag::LowerVariance {
                    rho: None,
                    corrected: false,
                },
                SigmaSource::ArmVariances(r) => VariantTag::LowerVariance {
                    rho: Some(r.get()),
                    corrected: variance_estimated,
                },
            },
        }
    }
}

/// Serializable description of the estimand of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantTag {
    Upper,
    Difference {
        alpha_hi: f64,
    },
    Interquantile {
        alpha_hi: f64,
    },
    LowerShift {
        constant: f64,
    },
    LowerMixture {
        b: f64,
    },
    /// `rho` is `None` for a user-supplied variance bound; `corrected`
    /// records whether the score accounts for estimated arm variances.
    LowerVariance {
        rho: Option<f64>,
        corrected: bool,
    },
}

/// Scores of all rows for one estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub variant: VariantTag,
}

impl ScoreVector {
    /// Mean and standard error `sqrt(sum (phi - mean)^2 / (n (n - 1)))`.
    pub fn mean_and_se(&self) -> (f64, f64) {
        let n = self.phi.len() as f64;
        let mean = self.phi.iter().sum::<f64>() / n;
        let ss: f64 = self.phi.iter().map(|p| (p - mean) * (p - mean)).sum();
        (mean, (ss / (n * (n - 1.0))).sqrt())
    }
}

/// Cross-fitting and interval settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            fold_mode: FoldMode::Shuffled,
            gamma: 0.9,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!(
                "confidence level {} must lie in (0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Provenance recorded with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub learner: String,
    pub seed: u64,
    pub fold_mode: FoldMode,
    pub clip_rate: f64,
    pub warnings: Vec<String>,
}

/// Point estimate, standard error and confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub psi_hat: f64,
    pub se: f64,
    pub gamma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub folds: usize,
    pub alpha: f64,
    pub variant: VariantTag,
    pub meta: ReportMeta,
    /// Hash of the data the report was computed on.
    pub fingerprint: u64,
}

impl CrossFit {
    /// Quantile estimate of fold `k` for the plain CVaR at `alpha`.
    pub fn beta_hat(&self, k: usize, alpha: AlphaLevel) -> Result<f64> {
        let tau = SampleVec::new(self.fold(k).train_tau.clone())?;
        Ok(empirical_quantile(&tau, alpha))
    }

    fn sigma2_rows(&self, sigma: &SigmaSource) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let data = self.data();
        let to_s2 = |(v0, v1): (f64, f64), rho: CorrelationSpec| variance_from_outcomes(v0.max(0.0), v1.max(0.0), rho);
        let (train, held): (Vec<Vec<f64>>, Vec<f64>) = match sigma {
            SigmaSource::Known(f) => (
                self.folds()
                    .iter()
                    .map(|ff| ff.train_rows.iter().map(|&i| f(data.row(i))).collect())
                    .collect(),
                (0..self.n()).map(|i| f(data.row(i))).collect(),
            ),
            SigmaSource::ArmVariances(rho) => {
                let missing =
                    || Error::invalid("the variance-restricted bound needs a learner that fits arm variances");
                let mut train = Vec::with_capacity(self.folds().len());
                for ff in self.folds() {
                    let tv = ff.train_var.as_ref().ok_or_else(missing)?;
                    train.push(tv.iter().map(|&v| to_s2(v, *rho)).collect::<Result<Vec<f64>>>()?);
                }
                let held = self
                    .rows()
                    .iter()
                    .map(|r| to_s2(r.var.ok_or_else(missing)?, *rho))
                    .collect::<Result<Vec<f64>>>()?;
                (train, held)
            }
        };
        if train.iter().flatten().chain(&held).any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("variance bound must be finite and nonnegative"));
        }
        Ok((train, held))
    }

    fn cvar_phi(&self, alpha: AlphaLevel) -> Result<Vec<f64>> {
        let betas = (1..=self.plan().k())
            .map(|k| self.beta_hat(k, alpha))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| cvar_score(r, betas[self.plan().fold_of(i) - 1], alpha.get()))
            .collect())
    }

    /// Scores of every row for `target`.
    pub fn scores(&self, target: &Target) -> Result<ScoreVector> {
        target.validate(self.n())?;
        let fold = |i: usize| self.plan().fold_of(i) - 1;
        let phi = match target {
            Target::Upper { alpha } => self.cvar_phi(*alpha)?,
            Target::LowerShift { alpha, constant } => {
                self.cvar_phi(*alpha)?.into_iter().map(|p| p - constant).collect()
            }
            Target::Difference { lo, hi } => {
                let (pl, ph) = (self.cvar_phi(*lo)?, self.cvar_phi(*hi)?);
                ph.iter().zip(&pl).map(|(h, l)| h - l).collect()
            }
            Target::Interquantile { lo, hi } => {
                let (pl, ph) = (self.cvar_phi(*lo)?, self.cvar_phi(*hi)?);
                let (a, b) = (lo.get(), hi.get());
                ph.iter().zip(&pl).map(|(h, l)| (b * h - a * l) / (b - a)).collect()
            }
            Target::LowerMixture { alpha, b } => {
                let betas = self
                    .folds()
                    .iter()
                    .map(|ff| {
                        Ok(empirical_quantile(
                            &SampleVec::new(ff.train_tau.clone())?.symmetric_spread(b.get()),
                            *alpha,
                        ))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                self.rows()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| mixture_score(r, betas[fold(i)], b.get(), alpha.get()))
                    .collect()
            }
            Target::LowerVariance { alpha, sigma } => {
                let (train_s2, held_s2) = self.sigma2_rows(sigma)?;
                let mut betas = Vec::with_capacity(self.folds().len());
                for (ff, s2) in self.folds().iter().zip(train_s2) {
                    let tau = SampleVec::new(ff.train_tau.clone())?;
                    let beta = if s2.iter().all(|&s| s == 0.0) {
                        // the objective is then exactly the CVaR objective
                        empirical_quantile(&tau, *alpha)
                    } else {
                        lower_bound_variance_argmax(&CateSample::with_sigma2(tau, s2)?, *alpha)?.0
                    };
                    betas.push(beta);
                }
                let rho = match sigma {
                    SigmaSource::ArmVariances(r) if self.variance_estimated() => Some(r.get()),
                    _ => None,
                };
                self.rows()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let terms = VarianceTerms {
                            sigma2: held_s2[i],
                            correct_with_rho: rho,
                        };
                        variance_score(r, betas[fold(i)], terms, alpha.get())
                    })
                    .collect()
            }
        };
        if let Some(i) = phi.iter().position(|p| !p.is_finite()) {
            return Err(Error::Internal(format!("non-finite score at row {i}")));
        }
        Ok(ScoreVector {
            phi,
            alpha: target.alpha().get(),
            variant: target.tag(self.variance_estimated()),
        })
    }

    pub(crate) fn meta(&self, seed: u64) -> ReportMeta {
        ReportMeta {
            learner: self.learner_name().to_string(),
            seed,
            fold_mode: self.plan().mode(),
            clip_rate: self.clip_rate(),
            warnings: self.warnings(),
        }
    }

    /// Point estimate and `gamma`-interval for `target`.
    pub fn report(&self, target: &Target, gamma: f64) -> Result<EstimateReport> {
        let scores = self.scores(target)?;
        Ok(self.report_from_scores(&scores, gamma))
    }

    fn report_from_scores(&self, scores: &ScoreVector, gamma: f64) -> EstimateReport {
        let (psi_hat, se) = scores.mean_and_se();
        let half = two_sided_z(gamma) * se;
        EstimateReport {
            psi_hat,
            se,
            gamma,
            ci_lo: psi_hat - half,
            ci_hi: psi_hat + half,
            n: self.n(),
            folds: self.plan().k(),
            alpha: scores.alpha,
            variant: scores.variant.clone(),
            meta: self.meta(self.plan().seed()),
            fingerprint: self.data().fingerprint(),
        }
    }
}

/// Fit nuisances with `learner` and estimate `target`.
pub fn estimate(
    data: &ObservationTable,
    learner: &dyn NuisanceLearner,
    target: &Target,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    target.validate(data.n())?;
    CrossFit::fit(data, learner, cfg.folds, cfg.fold_mode, cfg.seed)?.report(target, cfg.gamma)
}

/// Debiased estimate of `CVaR_alpha(tau(X))`.
pub fn estimate_cate_cvar(
    data: &ObservationTable,
    alpha: AlphaLevel,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::Upper { alpha }, cfg)
}

/// Debiased estimate of `CVaR_hi(tau(X)) - CVaR_lo(tau(X))`.
pub fn estimate_level_difference(
    data: &ObservationTable,
    lo: AlphaLevel,
    hi: AlphaLevel,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::Difference { lo, hi }, cfg)
}

/// Debiased estimate of the average CATE between its `lo`- and
/// `hi`-quantiles.
pub fn estimate_interquantile(
    data: &ObservationTable,
    lo: AlphaLevel,
    hi: AlphaLevel,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::Interquantile { lo, hi }, cfg)
}

/// CATE-CVaR estimate shifted down by a known constant.
pub fn estimate_lower_bound_shift(
    data: &ObservationTable,
    alpha: AlphaLevel,
    constant: f64,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::LowerShift { alpha, constant }, cfg)
}

/// Shift constant `(rmse0 + rmse1) / (2 alpha)` from cross-validated per-arm
/// prediction errors of `reg`.
pub fn rmse_shift_constant(
    data: &ObservationTable,
    alpha: AlphaLevel,
    reg: &RegressorSpec,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let [r0, r1] = cross_validated_rmse(data, reg, folds, seed)?;
    slack_from_rmse(r0, r1, alpha)
}

/// Debiased estimate of the two-sided range lower bound.
pub fn estimate_lower_bound_mixture(
    data: &ObservationTable,
    alpha: AlphaLevel,
    b: RangeBoundParams,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::LowerMixture { alpha, b }, cfg)
}

/// Debiased estimate of the variance-restricted lower bound.
pub fn estimate_lower_bound_variance(
    data: &ObservationTable,
    alpha: AlphaLevel,
    sigma: SigmaSource,
    learner: &dyn NuisanceLearner,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, learner, &Target::LowerVariance { alpha, sigma }, cfg)
}

/// Confidence interval for a partially identified CVaR from a lower-bound
/// and an upper-bound report: one-sided `(1 + gamma) / 2` limits of each.
pub fn partial_id_interval(lower: &EstimateReport, upper: &EstimateReport, gamma: f64) -> Result<(f64, f64)> {
    if lower.n != upper.n || lower.fingerprint != upper.fingerprint {
        return Err(Error::invalid(
            "lower and upper reports were computed on different data",
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("confidence level {gamma} must lie in (0, 1)")));
    }
    let z = two_sided_z(gamma);
    Ok((lower.psi_hat - z * lower.se, upper.psi_hat + z * upper.se))
}

/// Rows whose predicted CATE falls in the estimated lower `alpha`-tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupProfile {
    pub in_group: Vec<bool>,
    pub fraction: f64,
    /// Covariate means inside the group; `None` when the group is empty.
    pub mean_in: Option<Vec<f64>>,
    pub mean_out: Option<Vec<f64>>,
}

/// Membership `1{tau_hat(X_i) <= beta_hat}` with the nuisances and quantile
/// of the fold holding row `i` out, and covariate means in and out.
pub fn subgroup_profile(cf: &CrossFit, alpha: AlphaLevel) -> Result<SubgroupProfile> {
    let betas = (1..=cf.plan().k())
        .map(|k| cf.beta_hat(k, alpha))
        .collect::<Result<Vec<f64>>>()?;
    let in_group: Vec<bool> = cf
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| alpha.get() >= 1.0 || r.tau <= betas[cf.plan().fold_of(i) - 1])
        .collect();
    let data = cf.data();
    let means = |want: bool| {
        let idx: Vec<usize> = (0..cf.n()).filter(|&i| in_group[i] == want).collect();
        (!idx.is_empty()).then(|| {
            (0..data.d())
                .map(|j| idx.iter().map(|&i| data.row(i)[j]).sum::<f64>() / idx.len() as f64)
                .collect()
        })
    };
    Ok(SubgroupProfile {
        fraction: in_group.iter().filter(|&&g| g).count() as f64 / cf.n() as f64,
        mean_in: means(true),
        mean_out: means(false),
        in_group,
    })
}
