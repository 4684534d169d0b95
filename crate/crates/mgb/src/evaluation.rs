//! Coverage validation and statistical comparison.
//!
//! Three coverage protocols:
//!
//! - [`loo_coverage`] — leave-one-out over a cohort: calibrate on all
//!   subjects but one, test containment of the held-out ground truth,
//!   rotate, and report the per-fold flags plus the average.
//! - [`pixelwise_coverage`] — the uncalibrated baseline: per subject, build
//!   per-voxel quantile bound volumes, evaluate the metric on both (with
//!   masks re-derived from each bound volume), and test containment in the
//!   min/max envelope of those two values.
//! - [`marginal_coverage_mc`] — fresh synthetic cohorts per trial, calibrate
//!   on all but the last subject, test on the last; the empirical coverage
//!   estimates the marginal guarantee.
//!
//! Paired t-tests (two-sided, via the regularized incomplete beta) compare
//! bound-volume anatomy across methods.

use crate::cohort::{
    default_organ_windows, generate_cohort_with, segment_organs, Cohort, CohortConfig,
    CohortError, OrganWindow,
};
use crate::conformal::{
    calibrate_offset, conformal_rank, predict_interval, ConformalError, PredictionInterval,
};
use crate::metrics::{
    evaluate_metric, region_volume, segment_threshold, MetricError, MetricSet, MetricSpec,
};
use crate::par::map_indexed;
use crate::retrieval::{retrieve_bound_volumes, RetrievalError};
use crate::rng::derive_stream;
use crate::special::student_t_two_sided_p;
use crate::volume::{voxelwise_bounds, Mask, Volume, VolumeError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground truth required")]
    GroundTruthRequired,
    #[error("degenerate differences")]
    DegenerateDifferences,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs")]
    TooFewPairs,
    #[error("cohort too small")]
    CohortTooSmall,
    #[error("unknown metric: {0}")]
    UnknownMetric(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMethod {
    MetricGuided,
    PixelWise,
}

impl CoverageMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageMethod::MetricGuided => "metric_guided",
            CoverageMethod::PixelWise => "pixel_wise",
        }
    }
}

/// Containment summary for one method and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub method: CoverageMethod,
    pub metric: String,
    pub alpha: f64,
    pub n_patients: usize,
    pub covered: usize,
    pub coverage_pct: f64,
    /// Finite-sample-corrected target `⌈(n_p+1)(1−α)⌉ / n_p` in percent,
    /// with `n_p` the per-fold calibration size.
    pub adjusted_target_pct: f64,
}

/// Leave-one-out outcome: the summary plus the per-fold containment flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LooCoverage {
    pub report: CoverageReport,
    pub fold_covered: Vec<bool>,
}

/// Two-sided paired t-test result.
#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t_stat: f64,
    pub dof: usize,
    pub p_two_sided: f64,
}

/// Monte Carlo containment counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloCoverage {
    pub trials: usize,
    pub covered: usize,
}

impl MonteCarloCoverage {
    pub fn coverage(self) -> f64 {
        self.covered as f64 / self.trials as f64
    }
}

/// One synthetic calibration/test split, reusable across alpha values.
#[derive(Debug, Clone, PartialEq)]
pub struct McTrial {
    pub calibration: Vec<(MetricSet, f64)>,
    pub test_estimates: MetricSet,
    pub test_truth: f64,
}

/// Paired t-tests of bound-volume anatomy, metric-guided vs pixel-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomicalDifference {
    pub upper: TTestResult,
    pub lower: TTestResult,
}

fn adjusted_target_pct(n_calibration: usize, alpha: f64) -> f64 {
    100.0 * conformal_rank(n_calibration, alpha) as f64 / n_calibration as f64
}

/// Per-subject leave-one-out containment flags over `(estimates, truth)`
/// pairs. Fold `i` calibrates on every other pair and tests whether the
/// held-out truth falls in the held-out prediction interval.
pub fn loo_flags(pairs: &[(&MetricSet, f64)], alpha: f64) -> Result<Vec<bool>, EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::CohortTooSmall);
    }
    let flags = map_indexed(pairs.len(), |held_out| -> Result<bool, EvalError> {
        let rest: Vec<(&MetricSet, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .map(|(_, &(set, truth))| (set, truth))
            .collect();
        let calib = calibrate_offset(&rest, alpha)?;
        let interval = predict_interval(pairs[held_out].0, &calib)?;
        Ok(interval.contains(pairs[held_out].1))
    });
    flags.into_iter().collect()
}

fn cohort_pairs<'a>(
    cohort: &'a Cohort,
    metric_name: &str,
) -> Result<Vec<(&'a MetricSet, f64)>, EvalError> {
    cohort
        .patients
        .iter()
        .map(|p| {
            let set = p
                .estimated_for(metric_name)
                .ok_or_else(|| EvalError::UnknownMetric(metric_name.to_owned()))?;
            let truth = p.gt_for(metric_name).ok_or(EvalError::GroundTruthRequired)?;
            Ok((set, truth))
        })
        .collect()
}

/// Leave-one-out coverage of the metric-guided intervals over a cohort.
pub fn loo_coverage(
    cohort: &Cohort,
    metric: &MetricSpec,
    alpha: f64,
) -> Result<LooCoverage, EvalError> {
    let name = metric.to_string();
    let pairs = cohort_pairs(cohort, &name)?;
    let fold_covered = loo_flags(&pairs, alpha)?;
    let n = fold_covered.len();
    let covered = fold_covered.iter().filter(|&&c| c).count();
    Ok(LooCoverage {
        report: CoverageReport {
            method: CoverageMethod::MetricGuided,
            metric: name,
            alpha,
            n_patients: n,
            covered,
            coverage_pct: 100.0 * covered as f64 / n as f64,
            adjusted_target_pct: adjusted_target_pct(n - 1, alpha),
        },
        fold_covered,
    })
}

/// Metric interval realized by the per-voxel quantile bound volumes:
/// the min/max envelope of the metric evaluated on the lower and upper
/// bound volume, each with its own re-derived segmentation. `None` when a
/// bound volume's region segmentation comes up empty.
pub fn pixelwise_interval_for_metric(
    recons: &[Volume],
    organs: &[OrganWindow],
    metric: &MetricSpec,
    alpha: f64,
) -> Result<Option<(f64, f64)>, EvalError> {
    let bounds = voxelwise_bounds(recons, alpha)?;
    let mut endpoints = [0.0f64; 2];
    for (slot, bound_volume) in endpoints.iter_mut().zip([&bounds.lower, &bounds.upper]) {
        let masks = segment_organs(bound_volume, organs)?;
        match evaluate_metric(metric, bound_volume, &masks) {
            Ok(value) => *slot = value,
            Err(MetricError::Volume(VolumeError::EmptyRegion)) => return Ok(None),
            Err(err) => return Err(err.into()),
        }
    }
    Ok(Some((endpoints[0].min(endpoints[1]), endpoints[0].max(endpoints[1]))))
}

/// Coverage of the uncalibrated pixel-wise baseline for several metrics at
/// once, sharing the per-subject bound volumes and their segmentations.
/// A subject whose bound volumes fail to segment a metric's region counts
/// as not covered for that metric: the baseline produced no usable interval.
pub fn pixelwise_coverage_all(
    cohort: &Cohort,
    metrics: &[MetricSpec],
    alpha: f64,
) -> Result<Vec<CoverageReport>, EvalError> {
    if cohort.patients.is_empty() {
        return Err(EvalError::CohortTooSmall);
    }
    let truths: Vec<Vec<f64>> = cohort
        .patients
        .iter()
        .map(|p| {
            metrics
                .iter()
                .map(|m| p.gt_for(&m.to_string()).ok_or(EvalError::GroundTruthRequired))
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let per_patient = map_indexed(cohort.patients.len(), |i| -> Result<Vec<bool>, EvalError> {
        let patient = &cohort.patients[i];
        let bounds = voxelwise_bounds(&patient.reconstructions, alpha)?;
        let lower_masks = segment_organs(&bounds.lower, &cohort.organs)?;
        let upper_masks = segment_organs(&bounds.upper, &cohort.organs)?;
        let mut flags = Vec::with_capacity(metrics.len());
        for (metric, &truth) in metrics.iter().zip(&truths[i]) {
            let mut endpoints = Vec::with_capacity(2);
            let mut usable = true;
            for (volume, masks) in
                [(&bounds.lower, &lower_masks), (&bounds.upper, &upper_masks)]
            {
                match evaluate_metric(metric, volume, masks) {
                    Ok(value) => endpoints.push(value),
                    Err(MetricError::Volume(VolumeError::EmptyRegion)) => {
                        usable = false;
                        break;
                    }
                    Err(err) => return Err(err.into()),
                }
            }
            let covered = usable && {
                let lo = endpoints[0].min(endpoints[1]);
                let hi = endpoints[0].max(endpoints[1]);
                lo <= truth && truth <= hi
            };
            flags.push(covered);
        }
        Ok(flags)
    });

    let n = cohort.patients.len();
    let mut covered = vec![0usize; metrics.len()];
    for flags in per_patient {
        for (count, flag) in covered.iter_mut().zip(flags?) {
            *count += usize::from(flag);
        }
    }
    Ok(metrics
        .iter()
        .zip(covered)
        .map(|(metric, covered)| CoverageReport {
            method: CoverageMethod::PixelWise,
            metric: metric.to_string(),
            alpha,
            n_patients: n,
            covered,
            coverage_pct: 100.0 * covered as f64 / n as f64,
            adjusted_target_pct: adjusted_target_pct(n.saturating_sub(1).max(1), alpha),
        })
        .collect())
}

/// Single-metric convenience wrapper around [`pixelwise_coverage_all`].
pub fn pixelwise_coverage(
    cohort: &Cohort,
    metric: &MetricSpec,
    alpha: f64,
) -> Result<CoverageReport, EvalError> {
    Ok(pixelwise_coverage_all(cohort, std::slice::from_ref(metric), alpha)?
        .pop()
        .expect("one report per metric"))
}

/// Generates `trials` independent calibration/test splits from fresh
/// cohorts. Trial `t` seeds its cohort with `derive_stream(cfg.seed, t)`;
/// the last subject is the test subject. Volumes are dropped immediately,
/// so banks of thousands of trials stay small.
pub fn mc_trials(
    cfg: &CohortConfig,
    metric: &MetricSpec,
    trials: usize,
) -> Result<Vec<McTrial>, EvalError> {
    cfg.validate()?;
    if cfg.n_patients < 2 {
        return Err(EvalError::CohortTooSmall);
    }
    let name = metric.to_string();
    let specs = std::slice::from_ref(metric);
    let organs = default_organ_windows();
    let outcomes = map_indexed(trials, |t| -> Result<McTrial, EvalError> {
        let mut trial_cfg = cfg.clone();
        trial_cfg.seed = derive_stream(cfg.seed, t as u64);
        let cohort = generate_cohort_with(&trial_cfg, &organs, specs)?;
        let mut calibration = Vec::with_capacity(cohort.patients.len() - 1);
        for patient in &cohort.patients[..cohort.patients.len() - 1] {
            let set = patient
                .estimated_for(&name)
                .ok_or_else(|| EvalError::UnknownMetric(name.clone()))?;
            let truth = patient.gt_for(&name).ok_or(EvalError::GroundTruthRequired)?;
            calibration.push((set.clone(), truth));
        }
        let test = cohort.patients.last().expect("non-empty cohort");
        Ok(McTrial {
            calibration,
            test_estimates: test
                .estimated_for(&name)
                .ok_or_else(|| EvalError::UnknownMetric(name.clone()))?
                .clone(),
            test_truth: test.gt_for(&name).ok_or(EvalError::GroundTruthRequired)?,
        })
    });
    outcomes.into_iter().collect()
}

/// Containment rate of the calibrated intervals over a trial bank at one
/// miscoverage rate.
pub fn coverage_at(trials: &[McTrial], alpha: f64) -> Result<MonteCarloCoverage, EvalError> {
    let mut covered = 0;
    for trial in trials {
        let pairs: Vec<(&MetricSet, f64)> =
            trial.calibration.iter().map(|(set, truth)| (set, *truth)).collect();
        let calib = calibrate_offset(&pairs, alpha)?;
        let interval = predict_interval(&trial.test_estimates, &calib)?;
        if interval.contains(trial.test_truth) {
            covered += 1;
        }
    }
    Ok(MonteCarloCoverage { trials: trials.len(), covered })
}

/// Empirical marginal coverage over freshly simulated cohorts.
pub fn marginal_coverage_mc(
    cfg: &CohortConfig,
    metric: &MetricSpec,
    alpha: f64,
    trials: usize,
) -> Result<MonteCarloCoverage, EvalError> {
    if trials == 0 {
        return Err(EvalError::CohortTooSmall);
    }
    coverage_at(&mc_trials(cfg, metric, trials)?, alpha)
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPairs);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::NonFiniteInput);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(EvalError::DegenerateDifferences);
    }
    let sd = var.sqrt();
    let t_stat = mean / (sd / n.sqrt());
    let dof = diffs.len() - 1;
    Ok(TTestResult {
        n: diffs.len(),
        mean_diff: mean,
        sd_diff: sd,
        t_stat,
        dof,
        p_two_sided: student_t_two_sided_p(t_stat, dof),
    })
}

fn windowed_organ_volume(v: &Volume, window: &OrganWindow) -> Result<f64, EvalError> {
    let roi = Mask::full(v.dims())?;
    let mask = segment_threshold(v, window.lo, window.hi, &roi)?;
    Ok(region_volume(&mask, v.spacing()))
}

/// Compares the segmented organ volume of the bound-realizing volumes
/// across methods: per subject, the metric-guided bounds are the retrieved
/// reconstructions under leave-one-out calibration, the pixel-wise bounds
/// are the per-voxel quantile volumes; paired t-tests compare upper against
/// upper and lower against lower.
pub fn anatomical_difference_study(
    cohort: &Cohort,
    metric: &MetricSpec,
    alpha: f64,
) -> Result<AnatomicalDifference, EvalError> {
    let name = metric.to_string();
    let window = cohort
        .organ_window(&metric.region)
        .ok_or_else(|| EvalError::UnknownMetric(metric.region.clone()))?
        .clone();
    let pairs = cohort_pairs(cohort, &name)?;
    if pairs.len() < 2 {
        return Err(EvalError::CohortTooSmall);
    }

    type Quad = (f64, f64, f64, f64);
    let rows = map_indexed(cohort.patients.len(), |held_out| -> Result<Quad, EvalError> {
        let rest: Vec<(&MetricSet, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .map(|(_, &(set, truth))| (set, truth))
            .collect();
        let calib = calibrate_offset(&rest, alpha)?;
        let interval: PredictionInterval = predict_interval(pairs[held_out].0, &calib)?;
        let patient = &cohort.patients[held_out];
        let (lb_idx, ub_idx) = retrieve_bound_volumes(pairs[held_out].0, &interval)?;
        let mg_upper = windowed_organ_volume(&patient.reconstructions[ub_idx], &window)?;
        let mg_lower = windowed_organ_volume(&patient.reconstructions[lb_idx], &window)?;
        let bounds = voxelwise_bounds(&patient.reconstructions, alpha)?;
        let pw_upper = windowed_organ_volume(&bounds.upper, &window)?;
        let pw_lower = windowed_organ_volume(&bounds.lower, &window)?;
        Ok((mg_upper, pw_upper, mg_lower, pw_lower))
    });

    let mut mg_upper = Vec::new();
    let mut pw_upper = Vec::new();
    let mut mg_lower = Vec::new();
    let mut pw_lower = Vec::new();
    for row in rows {
        let (mu, pu, ml, pl) = row?;
        mg_upper.push(mu);
        pw_upper.push(pu);
        mg_lower.push(ml);
        pw_lower.push(pl);
    }
    Ok(AnatomicalDifference {
        upper: paired_t_test(&mg_upper, &pw_upper)?,
        lower: paired_t_test(&mg_lower, &pw_lower)?,
    })
}
