//! Log-log least squares for empirical convergence rates.
//!
//! The rate bound predicts the mean gap decays like a power of `t`, so a
//! straight line fit of `ln(gap)` against `ln(t)` over a checkpoint
//! window estimates the exponent: slope -0.5 means `O(1/sqrt(t))`.

use serde::Serialize;
use thiserror::Error;

use super::MetricsRow;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(
        "rate fit needs at least {needed} checkpoints with positive gap in the window, found {found}"
    )]
    TooFewPoints { needed: usize, found: usize },
    #[error("rate fit needs at least two distinct abscissae")]
    NoSpread,
    #[error("rate fit inputs must be finite")]
    NonFinite,
}

/// Fitted line `y = slope * x + intercept` with its coefficient of
/// determination and the number of points used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares on raw coordinates. A flat response fits
/// exactly, so its `r_squared` is 1 by convention.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<RateFit, FitError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(FitError::TooFewPoints {
            needed: 2,
            found: xs.len().min(ys.len()),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
    }
    if sxx == 0.0 {
        return Err(FitError::NoSpread);
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - y_bar) * (y - y_bar);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: xs.len(),
    })
}

/// Fit `ln(gap_mean)` against `ln(t)` over checkpoints with
/// `t_min <= t <= t_max` and a strictly positive mean gap.
///
/// Mean-over-trials rows are used when present (the bound controls the
/// expectation); otherwise all rows in the window are used. At least
/// three usable points are required.
pub fn fit_rate(rows: &[MetricsRow], t_min: u64, t_max: u64) -> Result<RateFit, FitError> {
    let means: Vec<&MetricsRow> = rows.iter().filter(|r| r.trial.is_none()).collect();
    let pool: Vec<&MetricsRow> = if means.is_empty() {
        rows.iter().collect()
    } else {
        means
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in pool {
        if row.t >= t_min && row.t <= t_max && row.gap_mean > 0.0 && row.gap_mean.is_finite() {
            xs.push((row.t as f64).ln());
            ys.push(row.gap_mean.ln());
        }
    }
    if xs.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: xs.len(),
        });
    }
    linear_fit(&xs, &ys)
}
