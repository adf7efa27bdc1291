//! Estimates over a grid of levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CrossFit, EstimateReport, ReportMeta, Target, VariantTag, MIN_TAIL_COUNT};
use crate::risk::{rearrange_monotone, AlphaLevel, RiskCurve};
use crate::{Error, Result};

/// Version of the serialized [`RiskReport`] layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One level of a curve. `psi_hat` is rearranged when the report says so;
/// `psi_raw`, `se` and the interval are the per-level estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub alpha: f64,
    pub psi_hat: f64,
    pub psi_raw: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub variant: VariantTag,
}

/// A level that was not estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLevel {
    pub alpha: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub schema_version: u32,
    pub n: usize,
    pub folds: usize,
    pub gamma: f64,
    pub rearranged: bool,
    pub entries: Vec<CurveEntry>,
    pub skipped: Vec<SkippedLevel>,
    pub meta: ReportMeta,
    pub fingerprint: u64,
}

impl RiskReport {
    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.psi_hat).collect()
    }
}

/// Estimate `target(alpha)` for every level of a strictly increasing grid,
/// reusing one set of cross-fitted nuisances. Levels with `n * alpha` below
/// the minimum tail count are skipped and listed. With `rearrange`, point
/// estimates are sorted to be nondecreasing in `alpha`; intervals are left
/// as estimated.
pub fn estimate_curve(
    cf: &CrossFit,
    alphas: &[f64],
    target: impl Fn(AlphaLevel) -> Target + Sync,
    gamma: f64,
    rearrange: bool,
) -> Result<RiskReport> {
    if alphas.is_empty() {
        return Err(Error::invalid("empty alpha grid"));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("alpha grid must be strictly increasing"));
    }
    let levels = alphas.iter().map(|&a| AlphaLevel::new(a)).collect::<Result<Vec<_>>>()?;
    let results: Vec<(f64, Option<Result<EstimateReport>>)> = levels
        .par_iter()
        .map(|&a| {
            let n_alpha = cf.n() as f64 * a.get();
            if n_alpha < MIN_TAIL_COUNT {
                (a.get(), None)
            } else {
                (a.get(), Some(cf.report(&target(a), gamma)))
            }
        })
        .collect();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (alpha, r) in results {
        match r {
            None => skipped.push(SkippedLevel {
                alpha,
                reason: format!("alpha too small for n: n * alpha < {MIN_TAIL_COUNT}"),
            }),
            Some(r) => {
                let r = r?;
                entries.push(CurveEntry {
                    alpha,
                    psi_hat: r.psi_hat,
                    psi_raw: r.psi_hat,
                    se: r.se,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                    variant: r.variant,
                });
            }
        }
    }
    if rearrange && !entries.is_empty() {
        let curve = RiskCurve::new(
            entries.iter().map(|e| e.alpha).collect(),
            entries.iter().map(|e| e.psi_raw).collect(),
        )?;
        for (e, v) in entries.iter_mut().zip(rearrange_monotone(&curve).values()) {
            e.psi_hat = *v;
        }
    }
    Ok(RiskReport {
        schema_version: SCHEMA_VERSION,
        n: cf.n(),
        folds: cf.plan().k(),
        gamma,
        rearranged: rearrange,
        entries,
        skipped,
        meta: cf.meta(cf.plan().seed()),
        fingerprint: cf.data().fingerprint(),
    })
}
