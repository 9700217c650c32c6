//! Fitting the constant in front of a bound from calibration instances.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatioPoint {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Smallest constant making lhs <= constant * rhs on the calibration set,
/// plus the held-out points checked against it afterwards.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitResult {
    pub constant: f64,
    pub calibration: Vec<RatioPoint>,
    pub max_ratio: f64,
    pub held_out: Vec<RatioPoint>,
    /// Held-out points with ratio above the fitted constant.
    pub violations: usize,
}

fn ratio_point(label: &str, lhs: f64, rhs: f64) -> Result<RatioPoint> {
    if !lhs.is_finite() || !rhs.is_finite() || lhs < 0.0 || rhs < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ratio needs finite nonnegative sides, got {lhs} / {rhs} at {label}"
        )));
    }
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        return Err(Error::InfeasibleFit(format!(
            "no constant covers {label}: lhs {lhs} against rhs 0"
        )));
    };
    Ok(RatioPoint {
        label: label.to_string(),
        lhs,
        rhs,
        ratio,
    })
}

/// Fits the constant as the max lhs/rhs ratio over `(label, lhs, rhs)`
/// calibration triples. A positive lhs over a zero rhs is infeasible.
pub fn fit_constant(instances: &[(String, f64, f64)]) -> Result<FitResult> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument(
            "constant fit needs at least one calibration instance".into(),
        ));
    }
    let mut calibration = Vec::with_capacity(instances.len());
    let mut max_ratio = 0.0f64;
    for (label, lhs, rhs) in instances {
        let pt = ratio_point(label, *lhs, *rhs)?;
        max_ratio = max_ratio.max(pt.ratio);
        calibration.push(pt);
    }
    Ok(FitResult {
        constant: max_ratio,
        calibration,
        max_ratio,
        held_out: Vec::new(),
        violations: 0,
    })
}

impl FitResult {
    /// Checks held-out triples against the fitted constant; returns the
    /// number of violations found in this batch.
    pub fn validate(
        &mut self,
        instances: &[(String, f64, f64)],
    ) -> Result<usize> {
        let mut fresh = 0;
        for (label, lhs, rhs) in instances {
            let pt = ratio_point(label, *lhs, *rhs)?;
            if pt.ratio > self.constant {
                fresh += 1;
            }
            self.held_out.push(pt);
        }
        self.violations += fresh;
        Ok(fresh)
    }
}
