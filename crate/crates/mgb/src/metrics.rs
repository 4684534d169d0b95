//! Scalar downstream metrics of a volume restricted to a region.
//!
//! The extractors mirror dose/structure statistics from radiotherapy
//! reporting, applied directly to reconstructed intensities: the hottest
//! voxel of a region, the value received by the hottest x% of a region, the
//! percentage of a region at or above a threshold, and the physical region
//! volume. Regions come from window-threshold segmentation, so segmentation
//! variability propagates into the estimated metrics of each reconstruction.

use crate::conformal::{sample_quantile, ConformalError, QuantileLevel};
use crate::volume::{mask_values, Mask, Volume, VolumeError};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("unknown region: {0}")]
    UnknownRegion(String),
    #[error("invalid metric spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

/// What to extract from a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    /// Hottest voxel in the region (a D_0 analog).
    RegionMax,
    /// Value received by the hottest x% of the region, `x` in (0, 100).
    DoseAtVolumeFraction(f64),
    /// Percentage of the region at or above the threshold.
    VolumeFractionAbove(f64),
    /// Physical region volume in cm³.
    RegionVolume,
}

/// A metric kind bound to a named region.
///
/// Canonical text forms: `region_max:<organ>`, `d_at_v:<x>:<organ>`,
/// `v_above:<t>:<organ>`, `region_volume:<organ>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub region: String,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, region: impl Into<String>) -> Result<Self, MetricError> {
        let region = region.into();
        if region.is_empty() || region.contains(':') || region.contains(',') {
            return Err(MetricError::InvalidSpec(format!("bad region name {region:?}")));
        }
        if let MetricKind::DoseAtVolumeFraction(x) = kind {
            if !(x > 0.0 && x < 100.0) || !x.is_finite() {
                return Err(MetricError::InvalidSpec(format!(
                    "volume fraction {x} outside (0, 100)"
                )));
            }
        }
        if let MetricKind::VolumeFractionAbove(t) = kind {
            if !t.is_finite() {
                return Err(MetricError::InvalidSpec("non-finite threshold".to_owned()));
            }
        }
        Ok(Self { kind, region })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MetricKind::RegionMax => write!(f, "region_max:{}", self.region),
            MetricKind::DoseAtVolumeFraction(x) => write!(f, "d_at_v:{}:{}", x, self.region),
            MetricKind::VolumeFractionAbove(t) => write!(f, "v_above:{}:{}", t, self.region),
            MetricKind::RegionVolume => write!(f, "region_volume:{}", self.region),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, MetricError> {
        let parts: Vec<&str> = s.split(':').collect();
        let invalid = || MetricError::InvalidSpec(s.to_owned());
        match parts.as_slice() {
            ["region_max", organ] => MetricSpec::new(MetricKind::RegionMax, *organ),
            ["region_volume", organ] => MetricSpec::new(MetricKind::RegionVolume, *organ),
            ["d_at_v", x, organ] => {
                let x: f64 = x.parse().map_err(|_| invalid())?;
                MetricSpec::new(MetricKind::DoseAtVolumeFraction(x), *organ)
            }
            ["v_above", t, organ] => {
                let t: f64 = t.parse().map_err(|_| invalid())?;
                MetricSpec::new(MetricKind::VolumeFractionAbove(t), *organ)
            }
            _ => Err(invalid()),
        }
    }
}

/// Estimated metric values for one subject's reconstruction set; index `j`
/// corresponds to reconstruction `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    pub patient_id: String,
    pub metric: String,
    pub values: Vec<f64>,
}

impl MetricSet {
    pub fn new(patient_id: impl Into<String>, metric: impl Into<String>, values: Vec<f64>) -> Self {
        Self { patient_id: patient_id.into(), metric: metric.into(), values }
    }
}

/// Maximum voxel value within the mask.
pub fn region_max(v: &Volume, m: &Mask) -> Result<f64, MetricError> {
    let values = mask_values(v, m)?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Value received by the hottest `x`% of the region: the `1 − x/100`
/// interpolated quantile of the masked values.
pub fn dose_at_volume_fraction(v: &Volume, m: &Mask, x: f64) -> Result<f64, MetricError> {
    if !(x > 0.0 && x < 100.0) || !x.is_finite() {
        return Err(MetricError::InvalidSpec(format!("volume fraction {x} outside (0, 100)")));
    }
    let values = mask_values(v, m)?;
    Ok(sample_quantile(&values, QuantileLevel::new(1.0 - x / 100.0)?)?)
}

/// Percentage of masked voxels with value at or above `threshold`.
pub fn volume_fraction_above(v: &Volume, m: &Mask, threshold: f64) -> Result<f64, MetricError> {
    let values = mask_values(v, m)?;
    let above = values.iter().filter(|&&val| val >= threshold).count();
    Ok(100.0 * above as f64 / values.len() as f64)
}

/// Physical volume of the masked voxels in cm³.
pub fn region_volume(m: &Mask, spacing: [f32; 3]) -> f64 {
    let voxel_mm3 = f64::from(spacing[0]) * f64::from(spacing[1]) * f64::from(spacing[2]);
    m.count_true() as f64 * voxel_mm3 / 1000.0
}

/// Voxels with value in `[lo, hi]`, intersected with a prior region of
/// interest. Infinite bounds are accepted.
pub fn segment_threshold(v: &Volume, lo: f64, hi: f64, roi: &Mask) -> Result<Mask, MetricError> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(MetricError::InvalidSpec(format!("bad window [{lo}, {hi}]")));
    }
    if v.dims() != roi.dims() {
        return Err(MetricError::Volume(VolumeError::IncompatibleVolumes));
    }
    let bits = v
        .data()
        .iter()
        .zip(roi.bits())
        .map(|(&val, &inside)| {
            let val = f64::from(val);
            inside && val >= lo && val <= hi
        })
        .collect();
    Ok(Mask::new(v.dims(), bits)?)
}

/// Dispatches a [`MetricSpec`] against a named mask collection.
pub fn evaluate_metric(
    spec: &MetricSpec,
    v: &Volume,
    masks: &BTreeMap<String, Mask>,
) -> Result<f64, MetricError> {
    let mask = masks
        .get(&spec.region)
        .ok_or_else(|| MetricError::UnknownRegion(spec.region.clone()))?;
    match spec.kind {
        MetricKind::RegionMax => region_max(v, mask),
        MetricKind::DoseAtVolumeFraction(x) => dose_at_volume_fraction(v, mask, x),
        MetricKind::VolumeFractionAbove(t) => volume_fraction_above(v, mask, t),
        MetricKind::RegionVolume => Ok(region_volume(mask, v.spacing())),
    }
}
