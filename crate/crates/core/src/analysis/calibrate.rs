//! Uncertainty calibration: area under the calibration error curve.

use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// Coverage measured at 100 central credible-interval levels 0.01..1.00.
#[derive(Debug, Clone)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub observed_coverage: Vec<f64>,
    pub auce: f64,
}

/// For each level `p`, count how many truths fall inside the central Gaussian
/// interval `mean +/- z_{(1+p)/2} * std`, and integrate `|coverage - p|` with
/// a left Riemann sum at step 0.01.
pub fn auce(means: &[f64], stds: &[f64], truths: &[f64]) -> Result<CalibrationCurve> {
    if means.is_empty() {
        return Err(Error::InvalidInput("auce needs at least one prediction".into()));
    }
    if means.len() != stds.len() || means.len() != truths.len() {
        return Err(Error::InvalidDimension {
            what: "auce input lengths",
            expected: means.len(),
            got: stds.len().min(truths.len()),
        });
    }
    if stds.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidInput("auce requires strictly positive stds".into()));
    }
    let n = means.len() as f64;
    let normalized: Vec<f64> = means
        .iter()
        .zip(stds)
        .zip(truths)
        .map(|((m, s), t)| ((t - m) / s).abs())
        .collect();
    let mut levels = Vec::with_capacity(100);
    let mut observed = Vec::with_capacity(100);
    let mut total = 0.0;
    for i in 1..=100 {
        let p = i as f64 / 100.0;
        let z = normal_quantile((1.0 + p) / 2.0);
        let covered = normalized.iter().filter(|&&d| d <= z).count() as f64 / n;
        total += (covered - p).abs() * 0.01;
        levels.push(p);
        observed.push(covered);
    }
    Ok(CalibrationCurve {
        levels,
        observed_coverage: observed,
        auce: total,
    })
}

/// Upper confidence bound scores, `mean + multiplier * std`.
pub fn ucb(means: &[f64], stds: &[f64], multiplier: f64) -> Result<Vec<f64>> {
    if multiplier < 0.0 {
        return Err(Error::InvalidInput(format!(
            "ucb multiplier must be >= 0, got {multiplier}"
        )));
    }
    if means.len() != stds.len() {
        return Err(Error::InvalidDimension {
            what: "ucb input lengths",
            expected: means.len(),
            got: stds.len(),
        });
    }
    if stds.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidInput("ucb requires nonnegative stds".into()));
    }
    Ok(means
        .iter()
        .zip(stds)
        .map(|(m, s)| m + multiplier * s)
        .collect())
}
