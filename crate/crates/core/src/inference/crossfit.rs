//! Cross-fitted nuisances and the per-fold quantile estimates.

use rayon::prelude::*;

use super::score::RowValues;
use crate::nuisance::{make_fold_plan, FoldMode, FoldNuisance, FoldPlan, NuisanceLearner, ObservationTable};
use crate::{Error, Result};

/// Nuisances fitted on the training rows of one fold, together with their
/// values on those training rows.
#[derive(Debug, Clone)]
pub struct FoldFit {
    pub nuisance: FoldNuisance,
    /// Training rows (0-indexed into the full table).
    pub train_rows: Vec<usize>,
    /// `tau_hat` on the training rows, aligned with `train_rows`.
    pub train_tau: Vec<f64>,
    /// Arm variances on the training rows, when fitted.
    pub train_var: Option<Vec<(f64, f64)>>,
}

/// All `K` fold fits plus every row's nuisance values taken from the fold
/// that holds it out.
#[derive(Debug, Clone)]
pub struct CrossFit {
    data: ObservationTable,
    plan: FoldPlan,
    folds: Vec<FoldFit>,
    rows: Vec<RowValues>,
    learner: String,
    variance_estimated: bool,
}

impl CrossFit {
    /// Fit nuisances on the complement of every fold. Folds are fitted in
    /// parallel; results are assembled in fold order.
    pub fn fit(
        data: &ObservationTable,
        learner: &dyn NuisanceLearner,
        folds: usize,
        mode: FoldMode,
        seed: u64,
    ) -> Result<Self> {
        let plan = make_fold_plan(data.n(), folds, seed, mode)?;
        let fits: Vec<Result<FoldFit>> = (1..=folds)
            .into_par_iter()
            .map(|k| fit_fold(data, learner, &plan, k).map_err(|e| e.in_fold(k)))
            .collect();
        let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let nf = &fits[plan.fold_of(i) - 1].nuisance;
            rows.push(
                RowValues::evaluate(data.row(i), data.treatment(i), data.outcome(i), nf)
                    .map_err(|e| e.in_fold(plan.fold_of(i)))?,
            );
        }
        Ok(Self {
            data: data.clone(),
            plan,
            folds: fits,
            rows,
            learner: learner.name(),
            variance_estimated: learner.variance_is_estimated(),
        })
    }

    pub fn data(&self) -> &ObservationTable {
        &self.data
    }

    pub fn plan(&self) -> &FoldPlan {
        &self.plan
    }

    pub fn folds(&self) -> &[FoldFit] {
        &self.folds
    }

    /// Fit of fold `k` in `1..=K`.
    pub fn fold(&self, k: usize) -> &FoldFit {
        &self.folds[k - 1]
    }

    pub fn rows(&self) -> &[RowValues] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn learner_name(&self) -> &str {
        &self.learner
    }

    pub fn variance_estimated(&self) -> bool {
        self.variance_estimated
    }

    /// Mean propensity clipping rate over folds.
    pub fn clip_rate(&self) -> f64 {
        self.folds.iter().map(|f| f.nuisance.clip_rate).sum::<f64>() / self.folds.len() as f64
    }

    /// Fitting diagnostics, prefixed with their fold and deduplicated.
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (k, f) in self.folds.iter().enumerate() {
            for w in &f.nuisance.warnings {
                let msg = format!("fold {}: {w}", k + 1);
                if !out.contains(&msg) {
                    out.push(msg);
                }
            }
        }
        out
    }
}

fn fit_fold(data: &ObservationTable, learner: &dyn NuisanceLearner, plan: &FoldPlan, k: usize) -> Result<FoldFit> {
    let train_rows = plan.complement(k);
    let train = data.subset(&train_rows)?;
    let nuisance = learner.fit(&train)?;
    let train_tau: Vec<f64> = (0..train.n()).map(|i| (nuisance.tau_hat)(train.row(i))).collect();
    if train_tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::Internal("non-finite CATE prediction on training rows".into()));
    }
    let train_var = nuisance.var_hat.as_ref().map(|v| {
        (0..train.n())
            .map(|i| (v(train.row(i), 0), v(train.row(i), 1)))
            .collect()
    });
    Ok(FoldFit {
        nuisance,
        train_rows,
        train_tau,
        train_var,
    })
}
