//! Nuisance learners fitted on one training split.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::regress::{solve_least_squares, LogisticModel, RegressorSpec};
use super::{arm_fn, covariate_fn, make_fold_plan, ArmFn, CovariateFn, FoldMode, ObservationTable};
use crate::risk::{empirical_quantile, AlphaLevel, SampleVec};
use crate::{Error, Result};

/// A fitted function plus diagnostics raised while fitting it.
#[derive(Clone)]
pub struct Fitted<F> {
    pub func: F,
    pub warnings: Vec<String>,
    /// Linear coefficients (intercept first) when the model is linear.
    pub coefficients: Option<Vec<f64>>,
}

impl<F> fmt::Debug for Fitted<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fitted")
            .field("warnings", &self.warnings)
            .field("coefficients", &self.coefficients)
            .finish_non_exhaustive()
    }
}

/// Nuisances fitted on the training rows of one fold.
#[derive(Clone)]
pub struct FoldNuisance {
    /// Propensity, already clipped into `[clip, 1 - clip]`.
    pub e_hat: CovariateFn,
    pub mu_hat: ArmFn,
    pub tau_hat: CovariateFn,
    /// Conditional outcome variance `Var(Y | X, A = a)`, when fitted.
    pub var_hat: Option<ArmFn>,
    pub clip: f64,
    /// Fraction of training rows whose raw propensity needed clipping.
    pub clip_rate: f64,
    pub warnings: Vec<String>,
}

impl fmt::Debug for FoldNuisance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FoldNuisance")
            .field("clip", &self.clip)
            .field("clip_rate", &self.clip_rate)
            .field("has_variance", &self.var_hat.is_some())
            .field("warnings", &self.warnings)
            .finish_non_exhaustive()
    }
}

/// Something that fits [`FoldNuisance`] from a training table.
pub trait NuisanceLearner: Send + Sync {
    fn fit(&self, train: &ObservationTable) -> Result<FoldNuisance>;

    fn name(&self) -> String;

    /// Whether `var_hat` is estimated from data (as opposed to known).
    fn variance_is_estimated(&self) -> bool {
        false
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if clip > 0.0 && clip < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!("propensity clip {clip} must lie in (0, 0.5)")))
    }
}

/// Clip `e` into `[clip, 1 - clip]`, returning the clipped function and the
/// fraction of `train` rows that were affected.
fn clip_propensity(e: CovariateFn, clip: f64, train: &ObservationTable) -> (CovariateFn, f64) {
    let clipped = (0..train.n())
        .filter(|&i| {
            let v = e(train.row(i));
            !(clip..=1.0 - clip).contains(&v)
        })
        .count();
    let f = covariate_fn(move |x| e(x).clamp(clip, 1.0 - clip));
    (f, clipped as f64 / train.n() as f64)
}

/// Fixed nuisance functions that ignore the training data, e.g. the true
/// functions of a simulation or deliberately wrong ones.
#[derive(Clone)]
pub struct OracleNuisance {
    pub e: CovariateFn,
    pub mu: ArmFn,
    pub tau: CovariateFn,
    pub var: Option<ArmFn>,
    pub clip: f64,
    pub label: String,
    /// Report the supplied arm variances as estimates, so that the
    /// variance-bound score adds its correction term for them.
    pub variance_estimated: bool,
}

impl OracleNuisance {
    pub fn new(e: CovariateFn, mu: ArmFn, tau: CovariateFn) -> Self {
        Self {
            e,
            mu,
            tau,
            var: None,
            clip: 0.01,
            label: "oracle".into(),
            variance_estimated: false,
        }
    }

    pub fn with_variance(mut self, var: ArmFn) -> Self {
        self.var = Some(var);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn treat_variance_as_estimated(mut self) -> Self {
        self.variance_estimated = true;
        self
    }
}

impl NuisanceLearner for OracleNuisance {
    fn fit(&self, train: &ObservationTable) -> Result<FoldNuisance> {
        check_clip(self.clip)?;
        let (e_hat, clip_rate) = clip_propensity(self.e.clone(), self.clip, train);
        Ok(FoldNuisance {
            e_hat,
            mu_hat: self.mu.clone(),
            tau_hat: self.tau.clone(),
            var_hat: self.var.clone(),
            clip: self.clip,
            clip_rate,
            warnings: Vec::new(),
        })
    }

    fn name(&self) -> String {
        self.label.clone()
    }

    fn variance_is_estimated(&self) -> bool {
        self.variance_estimated && self.var.is_some()
    }
}

/// How the propensity score is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySpec {
    /// Known constant treatment probability (randomized experiment).
    Known(f64),
    /// Logistic regression fitted on the training rows.
    Logistic,
}

/// CATE estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CateLearner {
    /// Regress the inverse-propensity pseudo-outcome on covariates.
    PseudoOutcome(RegressorSpec),
    /// Regress the doubly robust pseudo-outcome, with per-arm outcome models
    /// fitted on the opposite half of the training rows.
    Dr {
        outcome: RegressorSpec,
        effect: RegressorSpec,
    },
    /// Residualized least squares with a linear CATE; the marginal outcome
    /// model is fitted on the opposite half of the training rows.
    RLinear { marginal: RegressorSpec },
}

/// Outcome regression `mu(x, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLearner {
    /// `mu = 0`.
    Zero,
    /// Fit `E[Y | X]` and set `mu(x, a) = mu_bar(x) + (a - e(x)) tau(x)`.
    Marginal(RegressorSpec),
    /// Separate regressions within each arm.
    PerArm(RegressorSpec),
}

/// A complete recipe for fitting all nuisances from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub propensity: PropensitySpec,
    pub cate: CateLearner,
    pub outcome: OutcomeLearner,
    /// Fit `Var(Y | X, A)` with this regressor when set.
    #[serde(default)]
    pub variance: Option<RegressorSpec>,
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Declared bound on `|Y|`; violations are reported and `mu` is clipped.
    #[serde(default)]
    pub outcome_bound: Option<f64>,
}

fn default_clip() -> f64 {
    0.01
}

impl LearnerConfig {
    /// Experimental default: known propensity, OLS pseudo-outcome CATE and a
    /// marginal OLS outcome model.
    pub fn experimental(e: f64) -> Self {
        Self {
            propensity: PropensitySpec::Known(e),
            cate: CateLearner::PseudoOutcome(RegressorSpec::ols()),
            outcome: OutcomeLearner::Marginal(RegressorSpec::ols()),
            variance: None,
            clip: default_clip(),
            outcome_bound: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_clip(self.clip)?;
        if let PropensitySpec::Known(e) = self.propensity {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::invalid(format!("known propensity {e} must lie in (0, 1)")));
            }
        }
        match self.cate {
            CateLearner::PseudoOutcome(s) | CateLearner::RLinear { marginal: s } => s.validate()?,
            CateLearner::Dr { outcome, effect } => {
                outcome.validate()?;
                effect.validate()?;
            }
        }
        if let OutcomeLearner::Marginal(s) | OutcomeLearner::PerArm(s) = self.outcome {
            s.validate()?;
        }
        if let Some(s) = self.variance {
            s.validate()?;
        }
        if let Some(b) = self.outcome_bound {
            if !(b > 0.0) {
                return Err(Error::invalid("outcome bound must be positive"));
            }
        }
        Ok(())
    }
}

fn regress(train: &ObservationTable, target: &[f64], spec: &RegressorSpec) -> Result<Fitted<CovariateFn>> {
    let fit = spec.fit(train.x(), train.d(), target)?;
    let warnings = fit.warnings().to_vec();
    let coefficients = fit.linear_coefficients();
    Ok(Fitted {
        func: covariate_fn(move |x| fit.predict(x)),
        warnings,
        coefficients,
    })
}

/// Per-arm outcome regressions combined into `mu(x, a)`.
fn fit_per_arm(train: &ObservationTable, spec: &RegressorSpec) -> Result<Fitted<ArmFn>> {
    let mut fits = Vec::with_capacity(2);
    let mut warnings = Vec::new();
    for arm in [0u8, 1] {
        let idx: Vec<usize> = (0..train.n()).filter(|&i| train.treatment(i) == arm).collect();
        if idx.is_empty() {
            return Err(Error::invalid(format!("no training rows with treatment {arm}")));
        }
        let sub = train.subset(&idx)?;
        let f = regress(&sub, sub.y(), spec)?;
        warnings.extend(f.warnings);
        fits.push(f.func);
    }
    let (m0, m1) = (fits[0].clone(), fits[1].clone());
    Ok(Fitted {
        func: arm_fn(move |x, a| if a == 1 { m1(x) } else { m0(x) }),
        warnings,
        coefficients: None,
    })
}

/// Inverse-propensity pseudo-outcomes `(A - e) / (e (1 - e)) * Y`.
pub fn pseudo_outcomes(train: &ObservationTable, e: &CovariateFn) -> Vec<f64> {
    (0..train.n())
        .map(|i| {
            let ei = e(train.row(i));
            (f64::from(train.treatment(i)) - ei) / (ei * (1.0 - ei)) * train.outcome(i)
        })
        .collect()
}

/// CATE from regressing the inverse-propensity pseudo-outcome on covariates.
pub fn fit_pseudo_outcome_cate(
    train: &ObservationTable,
    e: &CovariateFn,
    reg: &RegressorSpec,
) -> Result<Fitted<CovariateFn>> {
    regress(train, &pseudo_outcomes(train, e), reg)
}

/// Doubly robust pseudo-outcomes
/// `mu(X,1) - mu(X,0) + (A - e) / (e (1 - e)) * (Y - mu(X, A))`.
pub fn dr_pseudo_outcomes(train: &ObservationTable, e_hat: &CovariateFn, mu_hat: &ArmFn) -> Vec<f64> {
    (0..train.n())
        .map(|i| {
            let x = train.row(i);
            let a = train.treatment(i);
            let ei = e_hat(x);
            mu_hat(x, 1) - mu_hat(x, 0) + (f64::from(a) - ei) / (ei * (1.0 - ei)) * (train.outcome(i) - mu_hat(x, a))
        })
        .collect()
}

/// DR-learner: regress the doubly robust pseudo-outcome on covariates.
pub fn fit_dr_learner(
    train: &ObservationTable,
    e_hat: &CovariateFn,
    mu_hat: &ArmFn,
    reg: &RegressorSpec,
) -> Result<Fitted<CovariateFn>> {
    regress(train, &dr_pseudo_outcomes(train, e_hat, mu_hat), reg)
}

/// R-learner with a linear CATE `theta' [1, x]`, minimizing
/// `sum (Y - mu_bar(X) - (A - e(X)) theta' [1, X])^2`.
pub fn fit_r_learner_linear(
    train: &ObservationTable,
    e_hat: &CovariateFn,
    mu_bar_hat: &CovariateFn,
) -> Result<Fitted<CovariateFn>> {
    let mu_bar: Vec<f64> = (0..train.n()).map(|i| mu_bar_hat(train.row(i))).collect();
    r_learner_from_values(train, e_hat, &mu_bar)
}

fn r_learner_from_values(train: &ObservationTable, e_hat: &CovariateFn, mu_bar: &[f64]) -> Result<Fitted<CovariateFn>> {
    let (n, d) = (train.n(), train.d());
    let p = d + 1;
    let mut design = Vec::with_capacity(n * p);
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let x = train.row(i);
        let w = f64::from(train.treatment(i)) - e_hat(x);
        design.push(w);
        design.extend(x.iter().map(|v| w * v));
        target.push(train.outcome(i) - mu_bar[i]);
    }
    let (theta, fallback) = solve_least_squares(&design, p, &target, &vec![0.0; p])?;
    let mut warnings = Vec::new();
    if fallback {
        let w = format!("singular R-learner design ({n} rows): refit with ridge 1e-8");
        log::warn!("{w}");
        warnings.push(w);
    }
    let coefficients = Some(theta.clone());
    Ok(Fitted {
        func: covariate_fn(move |x| theta[0] + theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()),
        warnings,
        coefficients,
    })
}

/// Outcome regression from a marginal one: `mu(x, a) = mu_bar(x) + (a - e(x)) tau(x)`.
pub fn mu_from_marginal(mu_bar_hat: CovariateFn, e: CovariateFn, tau_hat: CovariateFn) -> ArmFn {
    arm_fn(move |x, a| mu_bar_hat(x) + (f64::from(a) - e(x)) * tau_hat(x))
}

/// `Var(Y | X, A = a)` by regressing squared residuals within each arm,
/// clamped at zero.
pub fn fit_conditional_variance(
    train: &ObservationTable,
    mu_hat: &ArmFn,
    reg: &RegressorSpec,
) -> Result<Fitted<ArmFn>> {
    let mut fits = Vec::with_capacity(2);
    let mut warnings = Vec::new();
    for arm in [0u8, 1] {
        let idx: Vec<usize> = (0..train.n()).filter(|&i| train.treatment(i) == arm).collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "variance fit needs at least 2 rows with treatment {arm}, found {}",
                idx.len()
            )));
        }
        let sub = train.subset(&idx)?;
        let sq: Vec<f64> = (0..sub.n())
            .map(|i| (sub.outcome(i) - mu_hat(sub.row(i), arm)).powi(2))
            .collect();
        let f = regress(&sub, &sq, reg)?;
        warnings.extend(f.warnings);
        fits.push(f.func);
    }
    let (v0, v1) = (fits[0].clone(), fits[1].clone());
    Ok(Fitted {
        func: arm_fn(move |x, a| if a == 1 { v1(x) } else { v0(x) }.max(0.0)),
        warnings,
        coefficients: None,
    })
}

/// Empirical `alpha`-quantile of `tau_hat` over the rows of `train`.
pub fn out_of_fold_quantile(tau_hat: &CovariateFn, train: &ObservationTable, alpha: AlphaLevel) -> Result<f64> {
    let values: Vec<f64> = (0..train.n()).map(|i| tau_hat(train.row(i))).collect();
    Ok(empirical_quantile(&SampleVec::new(values)?, alpha))
}

/// Per-arm cross-validated root-mean-squared error of predicting `Y` from
/// `X` within each arm, as `[rmse0, rmse1]`.
pub fn cross_validated_rmse(
    table: &ObservationTable,
    reg: &RegressorSpec,
    folds: usize,
    seed: u64,
) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for arm in [0u8, 1] {
        let idx: Vec<usize> = (0..table.n()).filter(|&i| table.treatment(i) == arm).collect();
        let sub = table.subset(&idx)?;
        let plan = make_fold_plan(sub.n(), folds, seed, FoldMode::Shuffled)?;
        let mut sse = 0.0;
        for k in 1..=folds {
            let train = sub.subset(&plan.complement(k))?;
            let f = regress(&train, train.y(), reg)?.func;
            for i in plan.members(k) {
                sse += (sub.outcome(i) - f(sub.row(i))).powi(2);
            }
        }
        out[usize::from(arm)] = (sse / sub.n() as f64).sqrt();
    }
    Ok(out)
}

/// Split rows by parity of their position; fit on one half and evaluate on
/// the other, so no row is predicted by a model that saw it.
fn parity_halves(n: usize) -> [Vec<usize>; 2] {
    [(0..n).step_by(2).collect(), (1..n).step_by(2).collect()]
}

impl LearnerConfig {
    fn fit_propensity(&self, train: &ObservationTable) -> Result<(CovariateFn, f64)> {
        let raw: CovariateFn = match self.propensity {
            PropensitySpec::Known(e) => covariate_fn(move |_| e),
            PropensitySpec::Logistic => {
                let m = LogisticModel::fit(train.x(), train.d(), train.a())?;
                covariate_fn(move |x| m.predict(x))
            }
        };
        Ok(clip_propensity(raw, self.clip, train))
    }

    fn fit_cate(&self, train: &ObservationTable, e_hat: &CovariateFn) -> Result<Fitted<CovariateFn>> {
        match &self.cate {
            CateLearner::PseudoOutcome(spec) => fit_pseudo_outcome_cate(train, e_hat, spec),
            CateLearner::Dr { outcome, effect } => {
                let mut target = vec![0.0; train.n()];
                let mut warnings = Vec::new();
                let halves = parity_halves(train.n());
                for h in 0..2 {
                    let fit_rows = train.subset(&halves[1 - h])?;
                    let eval_rows = train.subset(&halves[h])?;
                    let mu = fit_per_arm(&fit_rows, outcome)?;
                    warnings.extend(mu.warnings);
                    for (j, v) in dr_pseudo_outcomes(&eval_rows, e_hat, &mu.func).into_iter().enumerate() {
                        target[halves[h][j]] = v;
                    }
                }
                let mut f = regress(train, &target, effect)?;
                f.warnings.extend(warnings);
                Ok(f)
            }
            CateLearner::RLinear { marginal } => {
                let mut mu_bar = vec![0.0; train.n()];
                let mut warnings = Vec::new();
                let halves = parity_halves(train.n());
                for h in 0..2 {
                    let fit_rows = train.subset(&halves[1 - h])?;
                    let m = regress(&fit_rows, fit_rows.y(), marginal)?;
                    warnings.extend(m.warnings);
                    for &i in &halves[h] {
                        mu_bar[i] = (m.func)(train.row(i));
                    }
                }
                let mut f = r_learner_from_values(train, e_hat, &mu_bar)?;
                f.warnings.extend(warnings);
                Ok(f)
            }
        }
    }
}

impl NuisanceLearner for LearnerConfig {
    fn fit(&self, train: &ObservationTable) -> Result<FoldNuisance> {
        self.validate()?;
        let (e_hat, clip_rate) = self.fit_propensity(train)?;
        let mut warnings = Vec::new();
        if clip_rate > 0.0 {
            warnings.push(format!(
                "propensity clipped on {:.2}% of training rows",
                100.0 * clip_rate
            ));
        }
        let cate = self.fit_cate(train, &e_hat)?;
        warnings.extend(cate.warnings);
        let tau_hat = cate.func;
        let mut mu_hat: ArmFn = match &self.outcome {
            OutcomeLearner::Zero => arm_fn(|_, _| 0.0),
            OutcomeLearner::Marginal(spec) => {
                let m = regress(train, train.y(), spec)?;
                warnings.extend(m.warnings);
                mu_from_marginal(m.func, e_hat.clone(), tau_hat.clone())
            }
            OutcomeLearner::PerArm(spec) => {
                let m = fit_per_arm(train, spec)?;
                warnings.extend(m.warnings);
                m.func
            }
        };
        if let Some(bound) = self.outcome_bound {
            let over = train.y().iter().filter(|y| y.abs() > bound).count();
            if over > 0 {
                warnings.push(format!("{over} training outcomes exceed the declared bound {bound}"));
            }
            let inner = mu_hat;
            mu_hat = arm_fn(move |x, a| inner(x, a).clamp(-bound, bound));
        }
        let var_hat = match &self.variance {
            Some(spec) => {
                let v = fit_conditional_variance(train, &mu_hat, spec)?;
                warnings.extend(v.warnings);
                Some(v.func)
            }
            None => None,
        };
        Ok(FoldNuisance {
            e_hat,
            mu_hat,
            tau_hat,
            var_hat,
            clip: self.clip,
            clip_rate,
            warnings,
        })
    }

    fn name(&self) -> String {
        let e = match self.propensity {
            PropensitySpec::Known(e) => format!("e={e}"),
            PropensitySpec::Logistic => "e=logistic".into(),
        };
        let cate = match &self.cate {
            CateLearner::PseudoOutcome(s) => format!("pseudo_outcome({s})"),
            CateLearner::Dr { outcome, effect } => format!("dr({outcome},{effect})"),
            CateLearner::RLinear { marginal } => format!("r_linear({marginal})"),
        };
        let mu = match &self.outcome {
            OutcomeLearner::Zero => "zero".into(),
            OutcomeLearner::Marginal(s) => format!("marginal({s})"),
            OutcomeLearner::PerArm(s) => format!("per_arm({s})"),
        };
        let mut name = format!("{e}; tau={cate}; mu={mu}");
        if let Some(v) = &self.variance {
            name.push_str(&format!("; var={v}"));
        }
        name
    }

    fn variance_is_estimated(&self) -> bool {
        self.variance.is_some()
    }
}
