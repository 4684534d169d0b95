//! Bound-realizing reconstruction lookup and the inlier/outlier partition.
//!
//! Given a calibrated interval over a test subject's estimated metrics, the
//! reconstructions whose metric values sit closest to the lower and upper
//! endpoints realize the bounds; every reconstruction is classified as a
//! statistical inlier (metric inside the closed interval) or outlier. The
//! retrieval error reports how far the realized metric is from its endpoint,
//! as a signed percentage of the interval length.

use crate::conformal::PredictionInterval;
use crate::metrics::MetricSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("unbounded interval: retrieval undefined")]
    UnboundedInterval,
    #[error("degenerate interval")]
    DegenerateInterval,
    #[error("empty sample")]
    EmptySample,
}

/// Which interval endpoint a retrieval refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Full retrieval outcome for one test subject against a finite interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub interval: PredictionInterval,
    pub lb_index: usize,
    pub ub_index: usize,
    /// Ascending reconstruction indices inside the closed interval.
    pub inlier_indices: Vec<usize>,
    /// Ascending reconstruction indices outside the closed interval.
    pub outlier_indices: Vec<usize>,
    pub lb_error_pct: f64,
    pub ub_error_pct: f64,
}

fn closest_index(values: &[f64], target: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &value) in values.iter().enumerate() {
        let dist = (value - target).abs();
        // Strict comparison keeps the smallest index on ties.
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// Indices of the reconstructions whose estimated metrics are closest to the
/// interval's lower and upper bounds. Ties break to the smallest index.
pub fn retrieve_bound_volumes(
    test: &MetricSet,
    interval: &PredictionInterval,
) -> Result<(usize, usize), RetrievalError> {
    if !interval.is_bounded() {
        return Err(RetrievalError::UnboundedInterval);
    }
    let lb_index = closest_index(&test.values, interval.lb).ok_or(RetrievalError::EmptySample)?;
    let ub_index = closest_index(&test.values, interval.ub).ok_or(RetrievalError::EmptySample)?;
    Ok((lb_index, ub_index))
}

/// Exhaustive, disjoint split into inliers and outliers by closed-interval
/// membership. Unbounded intervals classify everything as inlier.
pub fn partition_inliers_outliers(
    test: &MetricSet,
    interval: &PredictionInterval,
) -> (Vec<usize>, Vec<usize>) {
    let mut inliers = Vec::new();
    let mut outliers = Vec::new();
    for (j, &value) in test.values.iter().enumerate() {
        if interval.contains(value) {
            inliers.push(j);
        } else {
            outliers.push(j);
        }
    }
    (inliers, outliers)
}

/// Signed retrieval error `(Ŷ_B − B) / (UB − LB) × 100` where `Ŷ_B` is the
/// estimated metric closest to the requested bound `B`.
pub fn retrieval_error(
    test: &MetricSet,
    interval: &PredictionInterval,
    side: BoundSide,
) -> Result<f64, RetrievalError> {
    if !interval.is_bounded() {
        return Err(RetrievalError::UnboundedInterval);
    }
    let length = interval.ub - interval.lb;
    if length == 0.0 {
        return Err(RetrievalError::DegenerateInterval);
    }
    let bound = match side {
        BoundSide::Lower => interval.lb,
        BoundSide::Upper => interval.ub,
    };
    let index = closest_index(&test.values, bound).ok_or(RetrievalError::EmptySample)?;
    Ok((test.values[index] - bound) / length * 100.0)
}

/// Assembles the complete report for a finite interval.
pub fn retrieval_report(
    test: &MetricSet,
    interval: &PredictionInterval,
) -> Result<RetrievalReport, RetrievalError> {
    let (lb_index, ub_index) = retrieve_bound_volumes(test, interval)?;
    let (inlier_indices, outlier_indices) = partition_inliers_outliers(test, interval);
    let lb_error_pct = retrieval_error(test, interval, BoundSide::Lower)?;
    let ub_error_pct = retrieval_error(test, interval, BoundSide::Upper)?;
    Ok(RetrievalReport {
        interval: *interval,
        lb_index,
        ub_index,
        inlier_indices,
        outlier_indices,
        lb_error_pct,
        ub_error_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: Vec<f64>) -> MetricSet {
        MetricSet::new("patient_0", "region_max:heart", values)
    }

    fn interval(lb: f64, ub: f64) -> PredictionInterval {
        PredictionInterval { lb, ub, alpha: 0.1 }
    }

    #[test]
    fn closest_to_lower_bound() {
        let test = set(vec![1.0, 2.0, 3.0]);
        let (lb, _) = retrieve_bound_volumes(&test, &interval(1.2, 2.8)).unwrap();
        assert_eq!(lb, 0);
    }

    #[test]
    fn exact_hit_retrieves_same_index_for_both_bounds() {
        let test = set(vec![1.0, 2.0, 3.0]);
        let (lb, ub) = retrieve_bound_volumes(&test, &interval(2.0, 2.0)).unwrap();
        assert_eq!((lb, ub), (1, 1));
    }

    #[test]
    fn ties_break_to_smallest_index() {
        let test = set(vec![1.0, 3.0, 1.0, 3.0]);
        let (lb, ub) = retrieve_bound_volumes(&test, &interval(2.0, 2.0)).unwrap();
        assert_eq!((lb, ub), (0, 0));
    }

    #[test]
    fn retrieval_matches_exhaustive_argmin() {
        let mut rng = crate::rng::SplitMix64::new(31);
        for _ in 0..200 {
            let n = 1 + (rng.next_u64() % 20) as usize;
            let values: Vec<f64> = (0..n).map(|_| 20.0 * rng.next_f64() - 10.0).collect();
            let lb = 20.0 * rng.next_f64() - 10.0;
            let ub = lb + 10.0 * rng.next_f64();
            let test = set(values.clone());
            let (lb_idx, ub_idx) = retrieve_bound_volumes(&test, &interval(lb, ub)).unwrap();
            for (j, &v) in values.iter().enumerate() {
                assert!((values[lb_idx] - lb).abs() <= (v - lb).abs() || j == lb_idx);
                assert!((values[ub_idx] - ub).abs() <= (v - ub).abs() || j == ub_idx);
            }
        }
    }

    #[test]
    fn unbounded_interval_rejects_retrieval() {
        let test = set(vec![1.0]);
        let inf = interval(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(
            retrieve_bound_volumes(&test, &inf).unwrap_err(),
            RetrievalError::UnboundedInterval
        );
        assert_eq!(
            retrieval_error(&test, &inf, BoundSide::Upper).unwrap_err(),
            RetrievalError::UnboundedInterval
        );
    }

    #[test]
    fn partition_respects_closed_membership() {
        let test = set(vec![1.0, 2.0, 3.0]);
        let (inliers, outliers) = partition_inliers_outliers(&test, &interval(1.5, 2.5));
        assert_eq!(inliers, vec![1]);
        assert_eq!(outliers, vec![0, 2]);

        // Boundary values are inliers.
        let (inliers, _) = partition_inliers_outliers(&test, &interval(1.0, 2.5));
        assert_eq!(inliers, vec![0, 1]);
    }

    #[test]
    fn unbounded_interval_makes_everything_inlier() {
        let test = set(vec![-1e12, 0.0, 1e12]);
        let (inliers, outliers) =
            partition_inliers_outliers(&test, &interval(f64::NEG_INFINITY, f64::INFINITY));
        assert_eq!(inliers, vec![0, 1, 2]);
        assert!(outliers.is_empty());
    }

    #[test]
    fn retrieval_error_signed_values() {
        // interval length 5, closest estimate 0.5 beyond/short of the bound
        let test = set(vec![10.5]);
        let e = retrieval_error(&test, &interval(5.0, 10.0), BoundSide::Upper).unwrap();
        assert_eq!(e, 10.0);

        let test = set(vec![10.0]);
        let e = retrieval_error(&test, &interval(5.0, 10.0), BoundSide::Upper).unwrap();
        assert_eq!(e, 0.0);

        let test = set(vec![9.5]);
        let e = retrieval_error(&test, &interval(5.0, 10.0), BoundSide::Upper).unwrap();
        assert_eq!(e, -10.0);
    }

    #[test]
    fn retrieval_error_rejects_degenerate_interval() {
        let test = set(vec![1.0]);
        assert_eq!(
            retrieval_error(&test, &interval(2.0, 2.0), BoundSide::Lower).unwrap_err(),
            RetrievalError::DegenerateInterval
        );
    }

    #[test]
    fn report_assembles_consistent_fields() {
        let test = set(vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0]);
        let report = retrieval_report(&test, &interval(2.25, 15.75)).unwrap();
        assert_eq!(report.lb_index, 1);
        assert_eq!(report.ub_index, 8);
        assert_eq!(report.inlier_indices, vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(report.outlier_indices, vec![0, 1, 8, 9]);
        assert!((report.lb_error_pct - (-100.0 / 54.0)).abs() < 1e-12);
        assert!((report.ub_error_pct - 100.0 / 54.0).abs() < 1e-12);
    }

    #[test]
    fn widening_never_shrinks_inliers() {
        let mut rng = crate::rng::SplitMix64::new(77);
        for _ in 0..100 {
            let n = 1 + (rng.next_u64() % 15) as usize;
            let values: Vec<f64> = (0..n).map(|_| 10.0 * rng.next_f64()).collect();
            let test = set(values);
            let lb = 10.0 * rng.next_f64() - 2.0;
            let ub = lb + 5.0 * rng.next_f64();
            let pad = 3.0 * rng.next_f64();
            let (narrow, _) = partition_inliers_outliers(&test, &interval(lb, ub));
            let (wide, _) = partition_inliers_outliers(&test, &interval(lb - pad, ub + pad));
            for idx in &narrow {
                assert!(wide.contains(idx));
            }
        }
    }
}
