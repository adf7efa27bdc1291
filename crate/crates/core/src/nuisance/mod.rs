//! Observation tables, cross-fitting fold plans and nuisance estimators.
//!
//! The debiased estimator needs four nuisances fitted out of fold: the
//! propensity `e(x)`, the outcome regression `mu(x, a)`, the CATE `tau(x)`
//! and the CATE quantile `beta`. Optionally a conditional outcome variance
//! `Var(Y | X, A)` is fitted for the variance-restricted lower bound.

mod learners;
mod regress;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use learners::{
    cross_validated_rmse, dr_pseudo_outcomes, fit_conditional_variance, fit_dr_learner, fit_pseudo_outcome_cate,
    fit_r_learner_linear, mu_from_marginal, out_of_fold_quantile, pseudo_outcomes, CateLearner, Fitted, FoldNuisance,
    LearnerConfig, NuisanceLearner, OracleNuisance, OutcomeLearner, PropensitySpec,
};
pub use regress::{FittedRegressor, LogisticModel, RegressorKind, RegressorSpec};

/// A function of the covariates, e.g. `tau(x)` or `e(x)`.
pub type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A function of covariates and treatment arm, e.g. `mu(x, a)`.
pub type ArmFn = Arc<dyn Fn(&[f64], u8) -> f64 + Send + Sync>;

/// Wrap a closure as a [`CovariateFn`].
pub fn covariate_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> CovariateFn {
    Arc::new(f)
}

/// Wrap a closure as an [`ArmFn`].
pub fn arm_fn(f: impl Fn(&[f64], u8) -> f64 + Send + Sync + 'static) -> ArmFn {
    Arc::new(f)
}

/// `n` rows of (covariates, binary treatment, outcome).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    d: usize,
    x: Vec<f64>,
    a: Vec<u8>,
    y: Vec<f64>,
}

impl ObservationTable {
    /// `x` is row-major with `d` columns.
    pub fn new(d: usize, x: Vec<f64>, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid("no rows"));
        }
        if a.len() != n || x.len() != n * d {
            return Err(Error::invalid(format!(
                "inconsistent table: {} outcomes, {} treatments, {} covariate cells for d = {d}",
                n,
                a.len(),
                x.len()
            )));
        }
        if let Some(i) = a.iter().position(|&t| t > 1) {
            return Err(Error::invalid(format!("row {i}: treatment must be 0 or 1")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {i}: non-finite outcome")));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {}: non-finite covariate", j / d.max(1))));
        }
        Ok(Self { d, x, a, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged covariate rows"));
        }
        if rows.len() != y.len() {
            return Err(Error::invalid("covariate rows and outcomes differ in length"));
        }
        Self::new(d, rows.concat(), a, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn treatment(&self, i: usize) -> u8 {
        self.a[i]
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.a.iter().filter(|&&t| t == arm).count()
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Self::new(
            self.d,
            x,
            idx.iter().map(|&i| self.a[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }

    /// Same rows with the outcome replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.x.clone(), self.a.clone(), y)
    }

    /// FNV-1a hash of the table contents, used to check that two reports
    /// were computed on the same data.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&(self.d as u64).to_le_bytes());
        for v in &self.x {
            feed(&v.to_bits().to_le_bytes());
        }
        feed(&self.a);
        for v in &self.y {
            feed(&v.to_bits().to_le_bytes());
        }
        h
    }
}

/// How rows are mapped to folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Row `i` (1-indexed) goes to fold `k` iff `i = k - 1 (mod K)`.
    Literal,
    /// The same congruence applied to a seeded permutation of the rows.
    #[default]
    Shuffled,
}

/// Assignment of `n` rows to `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    mode: FoldMode,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> FoldMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Fold number in `1..=K` of row `i` (0-indexed).
    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i] + 1
    }

    /// Rows (0-indexed) of fold `fold` in `1..=K`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] + 1 == fold).collect()
    }

    /// Rows outside fold `fold`.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] + 1 != fold).collect()
    }
}

/// Build a fold plan. Requires `2 <= K <= n / 2`.
pub fn make_fold_plan(n: usize, k: usize, seed: u64, mode: FoldMode) -> Result<FoldPlan> {
    if k < 2 || 2 * k > n {
        return Err(Error::invalid(format!("{k} folds need 2 <= K <= n/2 with n = {n}")));
    }
    let congruence = |pos: usize| (pos + 1) % k;
    let assignment = match mode {
        FoldMode::Literal => (0..n).map(congruence).collect(),
        FoldMode::Shuffled => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut assignment = vec![0; n];
            for (pos, &row) in perm.iter().enumerate() {
                assignment[row] = congruence(pos);
            }
            assignment
        }
    };
    Ok(FoldPlan {
        k,
        assignment,
        mode,
        seed,
    })
}
