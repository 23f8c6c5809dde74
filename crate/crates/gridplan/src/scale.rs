//! Mean-preserving multiplicative rescaling with an optional value cap.
//!
//! Both the representative-day pipeline and the resource characterization
//! rescale series so a (weighted) mean hits a target. Capacity-factor series
//! must additionally stay within `[0, cap]`; when plain scaling would push
//! values past the cap they are clipped and the shortfall is redistributed
//! over the unclipped entries, iteratively, until the mean converges.

use std::fmt;

/// Iteration cap for the clip-and-redistribute loop.
const MAX_ITERATIONS: usize = 50;
/// Absolute tolerance on the achieved mean once clipping has occurred.
const CLIP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleError {
    /// The current weighted mean is zero but a nonzero target was requested.
    ZeroMean { target: f64 },
    /// The target mean cannot be reached with every value at or below the cap.
    CapTooTight { target: f64, cap: f64 },
    /// The redistribution loop ran out of iterations.
    NoConvergence { achieved: f64, target: f64 },
    /// Values and weights differ in length, or weights are invalid.
    BadInput { msg: String },
}

impl fmt::Display for ScaleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleError::ZeroMean { target } => {
                write!(f, "cannot rescale a zero-mean series to target mean {target}")
            }
            ScaleError::CapTooTight { target, cap } => {
                write!(f, "target mean {target} is unreachable with values capped at {cap}")
            }
            ScaleError::NoConvergence { achieved, target } => write!(
                f,
                "clip redistribution did not converge: mean {achieved} vs target {target}"
            ),
            ScaleError::BadInput { msg } => write!(f, "invalid rescale input: {msg}"),
        }
    }
}

impl std::error::Error for ScaleError {}

/// Result of a rescale: the new values plus how they were produced.
#[derive(Debug, Clone)]
pub struct ScaleOutcome {
    pub values: Vec<f64>,
    /// The initial multiplicative factor (target mean / source mean).
    pub factor: f64,
    /// Whether any value had to be clipped at the cap.
    pub clipped: bool,
    /// Redistribution iterations used (0 when plain scaling sufficed).
    pub iterations: usize,
}

/// Rescales non-negative `values` so their `weights`-weighted mean equals
/// `target_mean`, clipping at `cap` (if given) with iterative redistribution.
///
/// Without clipping the result is exact up to floating point; with clipping
/// the mean is within `1e-6` of the target or an error is returned. A target
/// of zero simply zeroes the series.
pub fn rescale_weighted(
    values: &[f64],
    weights: &[f64],
    target_mean: f64,
    cap: Option<f64>,
) -> Result<ScaleOutcome, ScaleError> {
    if values.len() != weights.len() {
        return Err(ScaleError::BadInput {
            msg: format!("{} values vs {} weights", values.len(), weights.len()),
        });
    }
    if values.is_empty() {
        return Err(ScaleError::BadInput { msg: "empty series".to_string() });
    }
    let total_w: f64 = weights.iter().sum();
    if !(total_w > 0.0) || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(ScaleError::BadInput {
            msg: "weights must be non-negative with a positive sum".to_string(),
        });
    }
    if let Some(c) = cap {
        if target_mean > c {
            return Err(ScaleError::CapTooTight { target: target_mean, cap: c });
        }
    }

    let mean = weighted_mean(values, weights, total_w);
    if mean == 0.0 {
        if target_mean == 0.0 {
            return Ok(ScaleOutcome { values: values.to_vec(), factor: 1.0, clipped: false, iterations: 0 });
        }
        return Err(ScaleError::ZeroMean { target: target_mean });
    }

    let factor = target_mean / mean;
    let mut out: Vec<f64> = values.iter().map(|v| v * factor).collect();

    let cap = match cap {
        Some(c) if out.iter().any(|&v| v > c) => c,
        _ => {
            return Ok(ScaleOutcome { values: out, factor, clipped: false, iterations: 0 });
        }
    };

    // Clip-and-redistribute: values at the cap are frozen; the remaining mass
    // needed to reach the target is spread multiplicatively over the rest.
    for iteration in 1..=MAX_ITERATIONS {
        for v in out.iter_mut() {
            if *v > cap {
                *v = cap;
            }
        }
        let mean = weighted_mean(&out, weights, total_w);
        if (mean - target_mean).abs() <= CLIP_TOL {
            return Ok(ScaleOutcome { values: out, factor, clipped: true, iterations: iteration });
        }
        let mut capped_w_sum = 0.0;
        let mut open_sum = 0.0;
        for (v, w) in out.iter().zip(weights) {
            if *v >= cap {
                capped_w_sum += w * cap;
            } else {
                open_sum += w * v;
            }
        }
        let needed = target_mean * total_w - capped_w_sum;
        if needed <= 0.0 || open_sum <= 0.0 {
            return Err(ScaleError::CapTooTight { target: target_mean, cap });
        }
        let boost = needed / open_sum;
        for v in out.iter_mut() {
            if *v < cap {
                *v *= boost;
            }
        }
    }

    let achieved = {
        for v in out.iter_mut() {
            if *v > cap {
                *v = cap;
            }
        }
        weighted_mean(&out, weights, total_w)
    };
    if (achieved - target_mean).abs() <= CLIP_TOL {
        return Ok(ScaleOutcome { values: out, factor, clipped: true, iterations: MAX_ITERATIONS });
    }
    Err(ScaleError::NoConvergence { achieved, target: target_mean })
}

/// Unweighted convenience wrapper over [`rescale_weighted`].
pub fn rescale(values: &[f64], target_mean: f64, cap: Option<f64>) -> Result<ScaleOutcome, ScaleError> {
    let weights = vec![1.0; values.len()];
    rescale_weighted(values, &weights, target_mean, cap)
}

fn weighted_mean(values: &[f64], weights: &[f64], total_w: f64) -> f64 {
    let s: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    s / total_w
}
