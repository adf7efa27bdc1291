//! Regression back ends used as black-box nuisance learners.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ridge added when the normal equations are singular.
const FALLBACK_RIDGE: f64 = 1e-8;
const MIN_LEAF: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    Ols,
    Ridge { lambda: f64 },
    Knn { k: usize },
    BoostedStumps { trees: usize, depth: usize, rate: f64 },
}

/// A regression method and whether to standardize covariates first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub kind: RegressorKind,
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_standardize() -> bool {
    true
}

impl RegressorSpec {
    pub fn ols() -> Self {
        Self::from_kind(RegressorKind::Ols)
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::from_kind(RegressorKind::Ridge { lambda })
    }

    pub fn knn(k: usize) -> Self {
        Self::from_kind(RegressorKind::Knn { k })
    }

    pub fn boosted(trees: usize, depth: usize, rate: f64) -> Self {
        Self::from_kind(RegressorKind::BoostedStumps { trees, depth, rate })
    }

    fn from_kind(kind: RegressorKind) -> Self {
        Self {
            kind,
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            RegressorKind::Ols => true,
            RegressorKind::Ridge { lambda } => lambda > 0.0 && lambda.is_finite(),
            RegressorKind::Knn { k } => k > 0,
            RegressorKind::BoostedStumps { trees, depth, rate } => {
                trees > 0 && depth > 0 && rate > 0.0 && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid regressor hyperparameters: {self}")))
        }
    }

    /// Fit on row-major `x` with `d` columns.
    pub fn fit(&self, x: &[f64], d: usize, y: &[f64]) -> Result<FittedRegressor> {
        self.validate()?;
        let n = y.len();
        if n == 0 || x.len() != n * d {
            return Err(Error::invalid("regression needs a nonempty, consistent design"));
        }
        let scaler = Scaler::fit(x, d, n, self.standardize);
        let z = scaler.transform_all(x, d);
        let mut warnings = Vec::new();
        let model = match self.kind {
            RegressorKind::Ols => fit_linear(&z, d, y, 0.0, &mut warnings)?,
            RegressorKind::Ridge { lambda } => fit_linear(&z, d, y, lambda, &mut warnings)?,
            RegressorKind::Knn { k } => Model::Knn {
                k: k.min(n),
                x: z,
                y: y.to_vec(),
            },
            RegressorKind::BoostedStumps { trees, depth, rate } => fit_boosted(&z, d, y, trees, depth, rate),
        };
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(FittedRegressor {
            d,
            scaler,
            model,
            warnings,
        })
    }
}

impl fmt::Display for RegressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RegressorKind::Ols => write!(f, "ols"),
            RegressorKind::Ridge { lambda } => write!(f, "ridge:{lambda}"),
            RegressorKind::Knn { k } => write!(f, "knn:{k}"),
            RegressorKind::BoostedStumps { trees, depth, rate } => write!(f, "boost:{trees}:{depth}:{rate}"),
        }
    }
}

impl FromStr for RegressorSpec {
    type Err = Error;

    /// `ols`, `ridge:<lambda>`, `knn:<k>` or `boost[:<trees>:<depth>:<rate>]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::invalid(format!("unrecognized learner '{s}'"));
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let int = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["ols"] => Self::ols(),
            ["ridge", l] => Self::ridge(num(l)?),
            ["knn", k] => Self::knn(int(k)?),
            ["boost"] => Self::boosted(100, 2, 0.1),
            ["boost", t, dp, r] => Self::boosted(int(t)?, int(dp)?, num(r)?),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
struct Scaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    fn fit(x: &[f64], d: usize, n: usize, standardize: bool) -> Self {
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        if standardize {
            for j in 0..d {
                let m = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
                let v = (0..n).map(|i| (x[i * d + j] - m).powi(2)).sum::<f64>() / n as f64;
                mean[j] = m;
                if v > 0.0 {
                    scale[j] = v.sqrt();
                }
            }
        }
        Self { mean, scale }
    }

    fn transform_into(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.scale[j];
        }
    }

    fn transform_all(&self, x: &[f64], d: usize) -> Vec<f64> {
        let mut z = vec![0.0; x.len()];
        if d > 0 {
            for (row, out) in x.chunks(d).zip(z.chunks_mut(d)) {
                self.transform_into(row, out);
            }
        }
        z
    }
}

#[derive(Debug, Clone)]
enum Model {
    Linear { intercept: f64, coef: Vec<f64> },
    Knn { k: usize, x: Vec<f64>, y: Vec<f64> },
    Boosted { base: f64, rate: f64, trees: Vec<Tree> },
}

/// A fitted regression model.
#[derive(Debug, Clone)]
pub struct FittedRegressor {
    d: usize,
    scaler: Scaler,
    model: Model,
    warnings: Vec<String>,
}

impl FittedRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.d];
        self.scaler.transform_into(&x[..self.d], &mut z);
        match &self.model {
            Model::Linear { intercept, coef } => intercept + coef.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>(),
            Model::Knn { k, x, y } => knn_predict(&z, self.d, *k, x, y),
            Model::Boosted { base, rate, trees } => base + rate * trees.iter().map(|t| t.predict(&z)).sum::<f64>(),
        }
    }

    /// Coefficients on the original covariate scale, intercept first.
    /// `None` for non-linear models.
    pub fn linear_coefficients(&self) -> Option<Vec<f64>> {
        match &self.model {
            Model::Linear { intercept, coef } => {
                let mut out = vec![*intercept];
                let mut c0 = *intercept;
                for j in 0..self.d {
                    let c = coef[j] / self.scaler.scale[j];
                    c0 -= c * self.scaler.mean[j];
                    out.push(c);
                }
                out[0] = c0;
                Some(out)
            }
            _ => None,
        }
    }

    /// Diagnostics raised during fitting, e.g. a singular-design fallback.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Solve `(D'D + diag(penalty)) b = D'y`, retrying with a tiny ridge when the
/// system is singular. Returns the solution and whether the fallback fired.
pub(crate) fn solve_least_squares(design: &[f64], p: usize, y: &[f64], penalty: &[f64]) -> Result<(Vec<f64>, bool)> {
    let n = y.len();
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..n {
        let row = &design[i * p..(i + 1) * p];
        for a in 0..p {
            rhs[a] += row[a] * y[i];
            for b in 0..=a {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
        g[(a, a)] += penalty[a];
    }
    if let Some(sol) = solve_spd(&g, &rhs) {
        return Ok((sol, false));
    }
    for a in 0..p {
        g[(a, a)] += FALLBACK_RIDGE;
    }
    solve_spd(&g, &rhs)
        .map(|s| (s, true))
        .ok_or_else(|| Error::Internal("normal equations are singular even after ridge fallback".into()))
}

fn solve_spd(g: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<Vec<f64>> {
    let p = g.nrows();
    if p == 0 {
        return Some(Vec::new());
    }
    let max_diag = (0..p).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let chol = g.clone().cholesky()?;
    let l = chol.l_dirty();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * max_diag) {
        return None;
    }
    let sol = chol.solve(rhs);
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

fn fit_linear(z: &[f64], d: usize, y: &[f64], lambda: f64, warnings: &mut Vec<String>) -> Result<Model> {
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    // center columns so the intercept is unpenalized
    let mut means = vec![0.0; d];
    for j in 0..d {
        means[j] = (0..n).map(|i| z[i * d + j]).sum::<f64>() / n as f64;
    }
    let centered: Vec<f64> = z.iter().enumerate().map(|(k, v)| v - means[k % d.max(1)]).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let (coef, fallback) = solve_least_squares(&centered, d, &yc, &vec![lambda; d])?;
    if fallback {
        warnings.push(format!(
            "singular design ({n} rows, {d} covariates): refit with ridge {FALLBACK_RIDGE:e}"
        ));
    }
    let intercept = ybar - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(Model::Linear { intercept, coef })
}

fn knn_predict(z: &[f64], d: usize, k: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = (0..y.len())
        .map(|i| {
            let row = &x[i * d..(i + 1) * d];
            (row.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
        })
        .collect();
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    dist[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
}

#[derive(Debug, Clone)]
enum Tree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    fn predict(&self, z: &[f64]) -> f64 {
        match self {
            Tree::Leaf(v) => *v,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if z[*feature] <= *threshold {
                    left.predict(z)
                } else {
                    right.predict(z)
                }
            }
        }
    }

    fn grow(z: &[f64], d: usize, r: &[f64], idx: &mut [usize], depth: usize) -> Tree {
        let m = idx.len();
        let total: f64 = idx.iter().map(|&i| r[i]).sum();
        let leaf = Tree::Leaf(if m > 0 { total / m as f64 } else { 0.0 });
        if depth == 0 || m < 2 * MIN_LEAF {
            return leaf;
        }
        let base = total * total / m as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..d {
            idx.sort_by(|&a, &b| z[a * d + j].total_cmp(&z[b * d + j]));
            let mut left = 0.0;
            for pos in 0..m - 1 {
                left += r[idx[pos]];
                let nl = pos + 1;
                let (v, next) = (z[idx[pos] * d + j], z[idx[pos + 1] * d + j]);
                if nl < MIN_LEAF || m - nl < MIN_LEAF || v == next {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / (m - nl) as f64 - base;
                if best.is_none_or(|b| gain > b.0 + 1e-12) {
                    best = Some((gain, j, 0.5 * (v + next)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        let (mut l, mut rr): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| z[i * d + feature] <= threshold);
        Tree::Split {
            feature,
            threshold,
            left: Box::new(Tree::grow(z, d, r, &mut l, depth - 1)),
            right: Box::new(Tree::grow(z, d, r, &mut rr, depth - 1)),
        }
    }
}

fn fit_boosted(z: &[f64], d: usize, y: &[f64], trees: usize, depth: usize, rate: f64) -> Model {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mut out = Vec::with_capacity(trees);
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..trees {
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = Tree::grow(z, d, &resid, &mut idx, depth);
        for i in 0..n {
            fitted[i] += rate * tree.predict(&z[i * d..(i + 1) * d]);
        }
        out.push(tree);
    }
    Model::Boosted { base, rate, trees: out }
}

/// Logistic regression `P(A = 1 | x)` fitted by iteratively reweighted least
/// squares with a small ridge for separable data.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    d: usize,
    scaler: Scaler,
    coef: Vec<f64>,
}

impl LogisticModel {
    pub fn fit(x: &[f64], d: usize, a: &[u8]) -> Result<Self> {
        let n = a.len();
        if n == 0 || x.len() != n * d {
            return Err(Error::invalid(
                "logistic regression needs a nonempty, consistent design",
            ));
        }
        let scaler = Scaler::fit(x, d, n, true);
        let z = scaler.transform_all(x, d);
        let p = d + 1;
        let mut design = vec![0.0; n * p];
        for i in 0..n {
            design[i * p] = 1.0;
            design[i * p + 1..(i + 1) * p].copy_from_slice(&z[i * d..(i + 1) * d]);
        }
        let ridge = 1e-6 * n as f64;
        let mut coef = vec![0.0; p];
        for _ in 0..100 {
            let mut h = DMatrix::<f64>::zeros(p, p);
            let mut grad = DVector::<f64>::zeros(p);
            for i in 0..n {
                let row = &design[i * p..(i + 1) * p];
                let eta: f64 = row.iter().zip(&coef).map(|(r, c)| r * c).sum();
                let pr = 1.0 / (1.0 + (-eta).exp());
                let w = (pr * (1.0 - pr)).max(1e-12);
                for u in 0..p {
                    grad[u] += row[u] * (f64::from(a[i]) - pr);
                    for v in 0..p {
                        h[(u, v)] += w * row[u] * row[v];
                    }
                }
            }
            for u in 0..p {
                grad[u] -= ridge * coef[u];
                h[(u, u)] += ridge;
            }
            let step = solve_spd(&h, &grad).ok_or_else(|| Error::Internal("logistic Newton step failed".into()))?;
            let size: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
            for u in 0..p {
                coef[u] += step[u];
            }
            if size < 1e-10 {
                break;
            }
        }
        Ok(Self { d, scaler, coef })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.d];
        self.scaler.transform_into(&x[..self.d], &mut z);
        let eta = self.coef[0] + self.coef[1..].iter().zip(&z).map(|(c, v)| c * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn ols_recovers_exact_linear_map() {
        let x = design(50, 2, 1);
        let y: Vec<f64> = x.chunks(2).map(|r| 1.0 + 2.0 * r[0] - 3.0 * r[1]).collect();
        let fit = RegressorSpec::ols().fit(&x, 2, &y).unwrap();
        let c = fit.linear_coefficients().unwrap();
        for (got, want) in c.iter().zip([1.0, 2.0, -3.0]) {
            assert!((got - want).abs() < 1e-9, "{c:?}");
        }
        assert!(fit.warnings().is_empty());
        assert!((fit.predict(&[0.5, 0.5]) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_column_triggers_ridge_fallback() {
        let mut x = design(30, 2, 2);
        for r in x.chunks_mut(2) {
            r[1] = 4.0;
        }
        let y: Vec<f64> = x.chunks(2).map(|r| 2.0 * r[0]).collect();
        for spec in [
            RegressorSpec::ols(),
            RegressorSpec {
                standardize: false,
                ..RegressorSpec::ols()
            },
        ] {
            let fit = spec.fit(&x, 2, &y).unwrap();
            assert_eq!(fit.warnings().len(), 1);
            assert!((fit.predict(&[0.3, 4.0]) - 0.6).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_targets_give_zero_fit() {
        let x = design(20, 3, 3);
        let fit = RegressorSpec::ols().fit(&x, 3, &[0.0; 20]).unwrap();
        assert_eq!(fit.predict(&[0.1, 0.2, 0.3]), 0.0);
    }

    #[test]
    fn ridge_shrinks_towards_mean() {
        let x = design(40, 1, 4);
        let y: Vec<f64> = x.iter().map(|v| 5.0 * v).collect();
        let weak = RegressorSpec::ridge(1e-6).fit(&x, 1, &y).unwrap();
        let strong = RegressorSpec::ridge(1e6).fit(&x, 1, &y).unwrap();
        assert!((weak.linear_coefficients().unwrap()[1] - 5.0).abs() < 1e-4);
        assert!(strong.linear_coefficients().unwrap()[1].abs() < 1e-3);
    }

    #[test]
    fn knn_averages_neighbours() {
        let x = vec![0.0, 1.0, 2.0, 10.0, 11.0];
        let y = vec![1.0, 1.0, 1.0, 5.0, 7.0];
        let fit = RegressorSpec::knn(2).fit(&x, 1, &y).unwrap();
        assert_eq!(fit.predict(&[10.4]), 6.0);
        assert_eq!(RegressorSpec::knn(50).fit(&x, 1, &y).unwrap().predict(&[0.0]), 3.0);
    }

    #[test]
    fn boosting_fits_step_function() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 0.5 { -1.0 } else { 2.0 }).collect();
        let fit = RegressorSpec::boosted(60, 1, 0.3).fit(&x, 1, &y).unwrap();
        assert!((fit.predict(&[0.2]) + 1.0).abs() < 1e-3);
        assert!((fit.predict(&[0.8]) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn intercept_only_design() {
        let fit = RegressorSpec::ols().fit(&[], 0, &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(fit.predict(&[]), 3.0);
    }

    #[test]
    fn parse_specs() {
        assert_eq!("ols".parse::<RegressorSpec>().unwrap(), RegressorSpec::ols());
        assert_eq!("ridge:0.5".parse::<RegressorSpec>().unwrap(), RegressorSpec::ridge(0.5));
        assert_eq!("knn:7".parse::<RegressorSpec>().unwrap(), RegressorSpec::knn(7));
        assert_eq!(
            "boost:10:2:0.2".parse::<RegressorSpec>().unwrap(),
            RegressorSpec::boosted(10, 2, 0.2)
        );
        assert!("ridge:-1".parse::<RegressorSpec>().is_err());
        assert!("forest".parse::<RegressorSpec>().is_err());
        assert!("knn:0".parse::<RegressorSpec>().is_err());
        let s = RegressorSpec::boosted(10, 2, 0.2);
        assert_eq!(s.to_string().parse::<RegressorSpec>().unwrap(), s);
    }

    #[test]
    fn logistic_recovers_propensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a: Vec<u8> = x
            .iter()
            .map(|&v| {
                let p = 1.0 / (1.0 + (-(-1.0 + 2.0 * v)).exp());
                u8::from(rng.random::<f64>() < p)
            })
            .collect();
        let m = LogisticModel::fit(&x, 1, &a).unwrap();
        for v in [0.1f64, 0.5, 0.9] {
            let truth = 1.0 / (1.0 + (-(-1.0 + 2.0 * v)).exp());
            assert!((m.predict(&[v]) - truth).abs() < 0.03);
        }
    }
}
