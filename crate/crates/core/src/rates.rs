//! Empirical convergence orders and contraction factors.

use crate::error::{Error, Result};
use crate::schedule::k0_threshold;

/// Values below this are treated as rounding noise and end a contraction series.
pub const ENERGY_FLOOR: f64 = 1e-24;
const MIN_POINTS: usize = 10;

/// Least-squares fit of `ln v = intercept + slope * ln k` over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (u64, u64),
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

/// Fit the empirical order of `series` on `k in [lo, hi]`. Every value in the
/// window must be positive and at least ten points must fall inside it.
pub fn fit_rate(series: &[(u64, f64)], window: (u64, u64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo == 0 || lo >= hi {
        return Err(Error::RateFit(format!("window [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(k, v) in series.iter().filter(|(k, _)| (lo..=hi).contains(k)) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::RateFit(format!("value {v} at k = {k} is not positive")));
        }
        xs.push((k as f64).ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < MIN_POINTS {
        return Err(Error::RateFit(format!("{n} points in window [{lo}, {hi}], need at least {MIN_POINTS}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { slope, intercept, window, residual: (sse / nf).sqrt(), points: n })
}

/// `[max(100, 10 K₀), 10⁴]`, skipping the pre-asymptotic head of a run.
pub fn default_window(mu: f64, c: Option<f64>) -> (u64, u64) {
    let k0 = c.and_then(|c| k0_threshold(mu, c).ok()).unwrap_or(1);
    ((10 * k0).max(100), 10_000)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    /// `E(k+1)/E(k)` for consecutive entries.
    pub ratios: Vec<f64>,
    pub max: f64,
    pub geometric_mean: f64,
}

/// Ratios of consecutive energies. The series is cut at the first value
/// below [`ENERGY_FLOOR`].
pub fn contraction_factors(series: &[(u64, f64)]) -> Result<Contraction> {
    let mut kept = Vec::with_capacity(series.len());
    for &(k, e) in series {
        if e < ENERGY_FLOOR {
            break;
        }
        if !e.is_finite() {
            return Err(Error::RateFit(format!("energy {e} at k = {k} is not finite")));
        }
        kept.push(e);
    }
    if series.first().is_some_and(|&(_, e)| e <= 0.0) {
        return Err(Error::RateFit("series starts at a nonpositive energy".into()));
    }
    if kept.len() < 2 {
        return Err(Error::RateFit("need at least two energies above the floor".into()));
    }
    let ratios: Vec<f64> = kept.windows(2).map(|w| w[1] / w[0]).collect();
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let geometric_mean = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    Ok(Contraction { ratios, max, geometric_mean })
}
