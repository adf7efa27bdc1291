//! Reference CVaR by direct maximization of the tail objective on a grid.

use crate::risk::{AlphaLevel, SampleVec};
use crate::{Error, Result};

/// Maximize `beta + E[(Z - beta)_-] / alpha` over `grid` equally spaced
/// points spanning `[min, max]`, then repeatedly regrid around the best
/// point. The objective is concave and piecewise linear, so zooming keeps
/// the maximizer inside the window.
pub fn brute_force_cvar(values: &SampleVec, alpha: AlphaLevel, grid: usize) -> Result<f64> {
    if grid < 1000 {
        return Err(Error::invalid("brute-force grid needs at least 1000 points"));
    }
    let mut pts: Vec<(f64, f64)> = (0..values.len())
        .map(|i| (values.values()[i], values.weight(i)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // prefix sums of w and w z over sorted values
    let mut cw = Vec::with_capacity(pts.len() + 1);
    let mut cwz = Vec::with_capacity(pts.len() + 1);
    cw.push(0.0);
    cwz.push(0.0);
    for &(z, w) in &pts {
        cw.push(cw.last().unwrap() + w);
        cwz.push(cwz.last().unwrap() + w * z);
    }
    let a = alpha.get();
    let objective = |beta: f64| {
        let k = pts.partition_point(|p| p.0 < beta);
        beta - (beta * cw[k] - cwz[k]) / a
    };
    let (mut lo, mut hi) = (pts[0].0, pts[pts.len() - 1].0);
    let mut best = (lo, objective(lo));
    for _ in 0..8 {
        let step = (hi - lo) / (grid - 1) as f64;
        let mut round = (lo, f64::NEG_INFINITY);
        for j in 0..grid {
            let b = if j == grid - 1 { hi } else { lo + j as f64 * step };
            let v = objective(b);
            if v > round.1 {
                round = (b, v);
            }
        }
        if round.1 > best.1 {
            best = round;
        }
        if step == 0.0 {
            break;
        }
        lo = (round.0 - step).max(pts[0].0);
        hi = (round.0 + step).min(pts[pts.len() - 1].0);
    }
    Ok(best.1)
}
