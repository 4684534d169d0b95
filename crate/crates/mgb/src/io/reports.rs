//! JSON and CSV report formats.
//!
//! JSON has no representation for infinities, so every field that can be
//! infinite (`q`, interval endpoints) serializes as `null`, with the
//! `unbounded` flag or a `"reason": "unbounded"` marker carrying the
//! machine-readable cause.

use super::IoError;
use crate::conformal::{CalibrationResult, PredictionInterval};
use crate::evaluation::{CoverageReport, TTestResult};
use crate::retrieval::RetrievalReport;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// `calib.json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationJson {
    pub alpha: f64,
    /// `null` means `+∞` (unbounded calibration).
    pub q: Option<f64>,
    pub n_p: usize,
    pub adjusted_level: f64,
    pub unbounded: bool,
    pub scores: Vec<f64>,
}

impl From<&CalibrationResult> for CalibrationJson {
    fn from(calib: &CalibrationResult) -> Self {
        Self {
            alpha: calib.alpha,
            q: calib.q.is_finite().then_some(calib.q),
            n_p: calib.n_calibration,
            adjusted_level: calib.adjusted_level,
            unbounded: calib.unbounded,
            scores: calib.scores.clone(),
        }
    }
}

impl TryFrom<CalibrationJson> for CalibrationResult {
    type Error = IoError;

    fn try_from(json: CalibrationJson) -> Result<Self, IoError> {
        let q = match (json.q, json.unbounded) {
            (Some(q), false) => q,
            (None, true) => f64::INFINITY,
            _ => {
                return Err(IoError::Malformed(
                    "q/unbounded fields are inconsistent".to_owned(),
                ))
            }
        };
        Ok(CalibrationResult {
            alpha: json.alpha,
            q,
            scores: json.scores,
            n_calibration: json.n_p,
            adjusted_level: json.adjusted_level,
            unbounded: json.unbounded,
        })
    }
}

pub fn write_calibration(path: &Path, calib: &CalibrationResult) -> Result<(), IoError> {
    write_json(path, &CalibrationJson::from(calib))
}

pub fn read_calibration(path: &Path) -> Result<CalibrationResult, IoError> {
    let json: CalibrationJson = read_json(path)?;
    json.try_into()
}

/// Interval fragment of `report.json`; `null` endpoints are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalJson {
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub alpha: f64,
}

impl From<&PredictionInterval> for IntervalJson {
    fn from(interval: &PredictionInterval) -> Self {
        Self {
            lb: interval.lb.is_finite().then_some(interval.lb),
            ub: interval.ub.is_finite().then_some(interval.ub),
            alpha: interval.alpha,
        }
    }
}

impl From<&IntervalJson> for PredictionInterval {
    fn from(json: &IntervalJson) -> Self {
        PredictionInterval {
            lb: json.lb.unwrap_or(f64::NEG_INFINITY),
            ub: json.ub.unwrap_or(f64::INFINITY),
            alpha: json.alpha,
        }
    }
}

/// `report.json` schema. Retrieval fields are `null` (with `reason`
/// `"unbounded"`) when the interval has an infinite endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalJson {
    pub interval: IntervalJson,
    pub lb_index: Option<usize>,
    pub ub_index: Option<usize>,
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    pub lb_error_pct: Option<f64>,
    pub ub_error_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl From<&RetrievalReport> for RetrievalJson {
    fn from(report: &RetrievalReport) -> Self {
        Self {
            interval: IntervalJson::from(&report.interval),
            lb_index: Some(report.lb_index),
            ub_index: Some(report.ub_index),
            inliers: report.inlier_indices.clone(),
            outliers: report.outlier_indices.clone(),
            lb_error_pct: Some(report.lb_error_pct),
            ub_error_pct: Some(report.ub_error_pct),
            reason: None,
        }
    }
}

impl RetrievalJson {
    /// Report for an unbounded interval: every reconstruction is an inlier
    /// and retrieval is undefined.
    pub fn unbounded(interval: &PredictionInterval, n_recons: usize) -> Self {
        Self {
            interval: IntervalJson::from(interval),
            lb_index: None,
            ub_index: None,
            inliers: (0..n_recons).collect(),
            outliers: Vec::new(),
            lb_error_pct: None,
            ub_error_pct: None,
            reason: Some("unbounded".to_owned()),
        }
    }
}

/// `result.json` schema for paired t-tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestJson {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t_stat: f64,
    pub dof: usize,
    pub p_two_sided: f64,
}

impl From<&TTestResult> for TTestJson {
    fn from(r: &TTestResult) -> Self {
        Self {
            n: r.n,
            mean_diff: r.mean_diff,
            sd_diff: r.sd_diff,
            t_stat: r.t_stat,
            dof: r.dof,
            p_two_sided: r.p_two_sided,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Coverage CSV header: `method,metric,alpha,n,covered,coverage_pct,target_pct`.
/// Monte Carlo rows append a `trials` column.
pub fn coverage_csv(rows: &[CoverageReport]) -> String {
    let mut out = String::from("method,metric,alpha,n,covered,coverage_pct,target_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            r.metric,
            r.alpha,
            r.n_patients,
            r.covered,
            r.coverage_pct,
            r.adjusted_target_pct
        ));
    }
    out
}

/// Monte Carlo variant of [`coverage_csv`] with the trailing `trials` column.
pub fn coverage_csv_mc(rows: &[(CoverageReport, usize)]) -> String {
    let mut out = String::from("method,metric,alpha,n,covered,coverage_pct,target_pct,trials\n");
    for (r, trials) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            r.metric,
            r.alpha,
            r.n_patients,
            r.covered,
            r.coverage_pct,
            r.adjusted_target_pct,
            trials
        ));
    }
    out
}

/// Strict single-column float file: one value per non-empty line.
pub fn read_float_column(path: &Path) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            IoError::Malformed(format!("line {}: {trimmed:?} is not a number", line_no + 1))
        })?;
        values.push(value);
    }
    Ok(values)
}
