//! Exact tail functionals of `c0 + sum_j c_j U_j` with independent uniform
//! `U_j`, and of finite location mixtures of it.

use crate::optimize::golden_section_max;
use crate::risk::AlphaLevel;
use crate::{Error, Result};

/// The distribution of `shift + sum_j w_j V_j`, `w_j > 0`, `V_j ~ U[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearUniform {
    shift: f64,
    weights: Vec<f64>,
    /// `(sign, corner)` over all subsets `J`: `(-1)^|J|` and `sum_{j in J} w_j`.
    corners: Vec<(f64, f64)>,
    norm: f64,
}

const MAX_TERMS: usize = 16;

impl LinearUniform {
    /// Distribution of `coef[0] + sum_j coef[j] U_j`.
    pub fn new(coef: &[f64]) -> Result<Self> {
        let (&c0, rest) = coef
            .split_first()
            .ok_or_else(|| Error::invalid("need at least an intercept"))?;
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        let mut shift = c0;
        let mut weights = Vec::new();
        for &c in rest {
            if c < 0.0 {
                // c U = c + |c| (1 - U)
                shift += c;
            }
            if c != 0.0 {
                weights.push(c.abs());
            }
        }
        if weights.len() > MAX_TERMS {
            return Err(Error::invalid(format!(
                "at most {MAX_TERMS} nonzero slopes are supported"
            )));
        }
        let d = weights.len();
        let mut corners = Vec::with_capacity(1 << d);
        for mask in 0usize..(1 << d) {
            let corner: f64 = (0..d).filter(|j| mask >> j & 1 == 1).map(|j| weights[j]).sum();
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            corners.push((sign, corner));
        }
        let norm = weights.iter().product::<f64>();
        Ok(Self {
            shift,
            weights,
            corners,
            norm,
        })
    }

    pub fn min(&self) -> f64 {
        self.shift
    }

    pub fn max(&self) -> f64 {
        self.shift + self.weights.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.shift + 0.5 * self.weights.iter().sum::<f64>()
    }

    /// `sum_J (-1)^|J| (t - w_J)_+^p / (p! prod w)` at `t` relative to the shift.
    fn spline(&self, t: f64, p: i32) -> f64 {
        let s: f64 = self
            .corners
            .iter()
            .map(|&(sign, c)| if t > c { sign * (t - c).powi(p) } else { 0.0 })
            .sum();
        s / (factorial(p) * self.norm)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = x - self.shift;
        if self.weights.is_empty() {
            return if t >= 0.0 { 1.0 } else { 0.0 };
        }
        if t <= 0.0 {
            0.0
        } else if x >= self.max() {
            1.0
        } else {
            self.spline(t, self.weights.len() as i32).clamp(0.0, 1.0)
        }
    }

    /// `E[(x - Z)_+]`.
    pub fn lower_partial_mean(&self, x: f64) -> f64 {
        let t = x - self.shift;
        if t <= 0.0 {
            return 0.0;
        }
        if self.weights.is_empty() || x >= self.max() {
            return x - self.mean();
        }
        self.spline(t, self.weights.len() as i32 + 1).max(0.0)
    }

    /// Density; `None` for a point mass.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        let d = self.weights.len() as i32;
        if d == 0 {
            return None;
        }
        let t = x - self.shift;
        if t <= 0.0 || x >= self.max() {
            return Some(0.0);
        }
        Some(self.spline(t, d - 1).max(0.0))
    }

    /// Kinks of the density, including the support endpoints, sorted.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.corners.iter().map(|&(_, c)| self.shift + c).collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        b
    }

    pub fn quantile(&self, alpha: AlphaLevel) -> f64 {
        mixture_quantile(&[(1.0, 0.0)], self, alpha.get())
    }

    pub fn cvar(&self, alpha: AlphaLevel) -> f64 {
        self.mixture_cvar(&[(1.0, 0.0)], alpha)
    }

    /// CVaR of the mixture placing weight `w` on `Z + shift` for each
    /// `(w, shift)` component; weights must sum to one.
    pub fn mixture_cvar(&self, parts: &[(f64, f64)], alpha: AlphaLevel) -> f64 {
        let a = alpha.get();
        let q = mixture_quantile(parts, self, a);
        let partial: f64 = parts.iter().map(|&(w, s)| w * self.lower_partial_mean(q - s)).sum();
        q - partial / a
    }

    /// `E[g(Z)]` by Gauss-Legendre quadrature on the density's polynomial
    /// pieces, each split into `pieces` panels.
    pub fn expect(&self, g: impl Fn(f64) -> f64, pieces: usize) -> f64 {
        if self.weights.is_empty() {
            return g(self.shift);
        }
        let (nodes, wts) = gauss_legendre(16);
        let bp = self.breakpoints();
        let mut total = 0.0;
        for w in bp.windows(2) {
            let h = (w[1] - w[0]) / pieces as f64;
            for p in 0..pieces {
                let mid = w[0] + (p as f64 + 0.5) * h;
                for (x, wt) in nodes.iter().zip(&wts) {
                    let z = mid + 0.5 * h * x;
                    total += 0.5 * h * wt * self.pdf(z).unwrap_or(0.0) * g(z);
                }
            }
        }
        total
    }

    /// Population variance-restricted lower bound with a constant residual
    /// variance bound `s2`:
    /// `sup_beta beta + E[Z - beta - sqrt((Z - beta)^2 + s2)] / (2 alpha)`.
    pub fn variance_bound(&self, s2: f64, alpha: AlphaLevel) -> f64 {
        let a = alpha.get();
        if a >= 1.0 || s2 == 0.0 {
            return self.cvar(alpha);
        }
        let f = |beta: f64| beta + self.expect(|z| crate::bounds::soft_negative_part(z - beta, s2), 40) / (2.0 * a);
        let slope = (1.0 - 2.0 * a) / (2.0 * (a * (1.0 - a)).sqrt());
        let s = s2.sqrt();
        let (lo, hi) = (self.min() - s * slope - 1.0, self.max() - s * slope + 1.0);
        golden_section_max(f, lo, hi, 1e-9).1
    }
}

/// Smallest `x` with `sum w F(x - s) >= alpha`, by bisection.
fn mixture_quantile(parts: &[(f64, f64)], dist: &LinearUniform, alpha: f64) -> f64 {
    let cdf = |x: f64| parts.iter().map(|&(w, s)| w * dist.cdf(x - s)).sum::<f64>();
    let mut lo = parts.iter().map(|p| dist.min() + p.1).fold(f64::INFINITY, f64::min);
    let mut hi = parts.iter().map(|p| dist.max() + p.1).fold(f64::NEG_INFINITY, f64::max);
    if cdf(lo) >= alpha {
        return lo;
    }
    // invariant: cdf(lo) < alpha <= cdf(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn factorial(p: i32) -> f64 {
    (1..=p).map(f64::from).product()
}

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
