//! Sample quantiles, CQR nonconformity scores and conformal calibration.
//!
//! The calibration procedure is split conformal prediction with the
//! conformalized-quantile-regression score: for each calibration subject the
//! score is the signed distance of the ground-truth metric outside the
//! empirical quantile band of its estimated metrics, and the offset `q` is a
//! conservative order statistic of those scores. Prediction intervals widen
//! the test subject's quantile band by `q` on both sides.
//!
//! Two quantile conventions coexist deliberately:
//!
//! - [`sample_quantile`] interpolates linearly between order statistics, for
//!   stable band estimates from small reconstruction sets;
//! - [`conformal_order_quantile`] takes the exact k-th smallest score with
//!   the ceiling rank `k = ⌈(n+1)(1−α)⌉`, which is what the finite-sample
//!   coverage guarantee requires. When `k` exceeds the number of scores the
//!   offset is `+∞` and the interval is explicitly unbounded rather than an
//!   error: the guarantee is vacuously satisfied and callers must see that.

use crate::metrics::MetricSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConformalError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid rank")]
    InvalidRank,
    #[error("invalid quantile level")]
    InvalidLevel,
    #[error("invalid alpha")]
    InvalidAlpha,
    #[error("no calibration data")]
    NoCalibrationData,
}

/// Probability level in `[0, 1]`, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(level: f64) -> Result<Self, ConformalError> {
        if level.is_finite() && (0.0..=1.0).contains(&level) {
            Ok(Self(level))
        } else {
            Err(ConformalError::InvalidLevel)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Output of offset calibration on one metric.
///
/// `scores` is kept in ascending order so the whole result is invariant to
/// the ordering of the calibration subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Miscoverage rate the calibration targeted.
    pub alpha: f64,
    /// Conformal offset; `+∞` when the rank exceeds the cohort size.
    pub q: f64,
    /// Sorted nonconformity scores, one per calibration subject.
    pub scores: Vec<f64>,
    /// Calibration cohort size.
    pub n_calibration: usize,
    /// Finite-sample-corrected level `⌈(n+1)(1−α)⌉ / n`; may exceed 1.
    pub adjusted_level: f64,
    /// True when no finite offset attains the corrected level.
    pub unbounded: bool,
}

/// Closed metric-space interval; endpoints are infinite iff the producing
/// calibration was unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lb: f64,
    pub ub: f64,
    pub alpha: f64,
}

impl PredictionInterval {
    /// Closed-interval membership; infinite endpoints admit everything.
    pub fn contains(&self, value: f64) -> bool {
        self.lb <= value && value <= self.ub
    }

    pub fn is_bounded(&self) -> bool {
        self.lb.is_finite() && self.ub.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }
}

/// Linearly interpolated empirical quantile.
///
/// With sorted values `v[0] ≤ … ≤ v[n-1]` and position `p = level·(n−1)`,
/// returns `v[⌊p⌋] + (p−⌊p⌋)·(v[⌊p⌋+1] − v[⌊p⌋])`, clamped into the bracket
/// so monotonicity in `level` holds exactly despite rounding.
pub fn sample_quantile(values: &[f64], level: QuantileLevel) -> Result<f64, ConformalError> {
    if values.is_empty() {
        return Err(ConformalError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ConformalError::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(interpolate_sorted(&sorted, level.value()))
}

/// Quantile interpolation over values already in ascending order.
pub(crate) fn interpolate_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let position = level * (n - 1) as f64;
    let lower = position.floor() as usize;
    if lower + 1 >= n {
        return sorted[n - 1];
    }
    let fraction = position - lower as f64;
    if fraction == 0.0 {
        return sorted[lower];
    }
    let step = sorted[lower + 1] - sorted[lower];
    (sorted[lower] + fraction * step).min(sorted[lower + 1])
}

/// k-th smallest score (1-based, no interpolation), or `+∞` when `k`
/// exceeds the sample size.
pub fn conformal_order_quantile(scores: &[f64], k: usize) -> Result<f64, ConformalError> {
    if k == 0 {
        return Err(ConformalError::InvalidRank);
    }
    if scores.is_empty() {
        return Err(ConformalError::EmptySample);
    }
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Conservative conformal rank `⌈(n+1)(1−α)⌉`.
///
/// The product is snapped to the nearest integer when within 1e-9 of one,
/// so that mathematically integral ranks (e.g. 20·0.9) never creep upward
/// through floating-point rounding.
pub fn conformal_rank(n_calibration: usize, alpha: f64) -> usize {
    let raw = (n_calibration as f64 + 1.0) * (1.0 - alpha);
    let nearest = raw.round();
    let snapped = if (raw - nearest).abs() < 1e-9 * raw.abs().max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    snapped.max(1.0) as usize
}

/// CQR nonconformity score: how far the truth sits outside the empirical
/// `[α/2, 1−α/2]` band of the estimated metrics. Negative when the truth is
/// strictly inside the band; negatives are retained, not floored.
pub fn cqr_score(estimated: &MetricSet, truth: f64, alpha: f64) -> Result<f64, ConformalError> {
    if !(alpha > 0.0 && alpha < 1.0) || !alpha.is_finite() {
        return Err(ConformalError::InvalidAlpha);
    }
    if !truth.is_finite() {
        return Err(ConformalError::NonFiniteInput);
    }
    let lower = sample_quantile(&estimated.values, QuantileLevel::new(alpha / 2.0)?)?;
    let upper = sample_quantile(&estimated.values, QuantileLevel::new(1.0 - alpha / 2.0)?)?;
    Ok((lower - truth).max(truth - upper))
}

/// Calibrates the conformal offset from `(estimated metrics, ground truth)`
/// pairs. Deterministic and invariant to subject ordering.
pub fn calibrate_offset(
    calibration: &[(&MetricSet, f64)],
    alpha: f64,
) -> Result<CalibrationResult, ConformalError> {
    if calibration.is_empty() {
        return Err(ConformalError::NoCalibrationData);
    }
    let mut scores = Vec::with_capacity(calibration.len());
    for (estimated, truth) in calibration {
        scores.push(cqr_score(estimated, *truth, alpha)?);
    }
    scores.sort_unstable_by(f64::total_cmp);

    let n = scores.len();
    let rank = conformal_rank(n, alpha);
    let unbounded = rank > n;
    let q = if unbounded { f64::INFINITY } else { scores[rank - 1] };
    Ok(CalibrationResult {
        alpha,
        q,
        scores,
        n_calibration: n,
        adjusted_level: rank as f64 / n as f64,
        unbounded,
    })
}

/// Prediction interval for a test subject: its quantile band widened by the
/// calibrated offset, or `(−∞, +∞)` when the calibration was unbounded.
///
/// A strongly negative offset can cross the band's endpoints; the interval
/// then collapses to its midpoint so `lb ≤ ub` always holds.
pub fn predict_interval(
    test: &MetricSet,
    calib: &CalibrationResult,
) -> Result<PredictionInterval, ConformalError> {
    if calib.unbounded {
        return Ok(PredictionInterval {
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            alpha: calib.alpha,
        });
    }
    let band_lo = sample_quantile(&test.values, QuantileLevel::new(calib.alpha / 2.0)?)?;
    let band_hi = sample_quantile(&test.values, QuantileLevel::new(1.0 - calib.alpha / 2.0)?)?;
    let mut lb = band_lo - calib.q;
    let mut ub = band_hi + calib.q;
    if lb > ub {
        let mid = 0.5 * (lb + ub);
        lb = mid;
        ub = mid;
    }
    Ok(PredictionInterval { lb, ub, alpha: calib.alpha })
}
