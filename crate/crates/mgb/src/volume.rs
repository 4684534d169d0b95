//! 3-D scalar fields, boolean masks and per-voxel quantile bounds.
//!
//! Voxels are stored in a flat array with x varying fastest, then y, then z;
//! that ordering is part of the on-disk format contract and of every oracle
//! in the test suite. Volumes are immutable after construction and safe to
//! share across threads.

use crate::conformal::{interpolate_sorted, ConformalError, QuantileLevel};
use crate::par::map_indexed;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VolumeError {
    #[error("incompatible volumes")]
    IncompatibleVolumes,
    #[error("empty region")]
    EmptyRegion,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid dimensions")]
    InvalidDims,
    #[error("invalid spacing")]
    InvalidSpacing,
    #[error("data length {got} does not match dims product {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid alpha")]
    InvalidAlpha,
    #[error("empty reconstruction set")]
    EmptyReconstructionSet,
}

/// Scalar field over a voxel grid, x-fastest flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<f32>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidDims);
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(VolumeError::InvalidSpacing);
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch { got: data.len(), expected });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteInput);
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn filled(dims: [usize; 3], spacing: [f32; 3], value: f32) -> Result<Self, VolumeError> {
        let len = dims[0] * dims[1] * dims[2];
        Self::new(dims, spacing, vec![value; len])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of voxel `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn value_at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn same_grid(&self, other: &Volume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

/// Boolean voxel selection over the same grid layout as [`Volume`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], bits: Vec<bool>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidDims);
        }
        let expected = dims[0] * dims[1] * dims[2];
        if bits.len() != expected {
            return Err(VolumeError::LengthMismatch { got: bits.len(), expected });
        }
        Ok(Self { dims, bits })
    }

    /// Mask selecting every voxel.
    pub fn full(dims: [usize; 3]) -> Result<Self, VolumeError> {
        let len = dims[0] * dims[1] * dims[2];
        Self::new(dims, vec![true; len])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_false(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Per-voxel quantile envelope of a reconstruction set; the conventional
/// pixel-wise baseline. No conformal adjustment is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelwiseBounds {
    pub lower: Volume,
    pub upper: Volume,
    pub alpha: f64,
}

/// Per-voxel `[α/2, 1−α/2]` interpolated quantiles across reconstructions.
pub fn voxelwise_bounds(recons: &[Volume], alpha: f64) -> Result<VoxelwiseBounds, VolumeError> {
    let first = recons.first().ok_or(VolumeError::EmptyReconstructionSet)?;
    if !(alpha > 0.0 && alpha < 1.0) || !alpha.is_finite() {
        return Err(VolumeError::InvalidAlpha);
    }
    if recons.iter().any(|r| !r.same_grid(first)) {
        return Err(VolumeError::IncompatibleVolumes);
    }

    let dims = first.dims();
    let plane = dims[0] * dims[1];
    let lo_level = alpha / 2.0;
    let hi_level = 1.0 - alpha / 2.0;

    // One z-plane per work item, with a per-item scratch buffer for the
    // cross-reconstruction samples at each voxel.
    let planes = map_indexed(dims[2], |z| {
        let mut lower = vec![0.0f32; plane];
        let mut upper = vec![0.0f32; plane];
        let mut samples = vec![0.0f64; recons.len()];
        for offset in 0..plane {
            let idx = z * plane + offset;
            for (slot, recon) in samples.iter_mut().zip(recons) {
                *slot = f64::from(recon.data()[idx]);
            }
            samples.sort_unstable_by(f64::total_cmp);
            lower[offset] = interpolate_sorted(&samples, lo_level) as f32;
            upper[offset] = interpolate_sorted(&samples, hi_level) as f32;
        }
        (lower, upper)
    });

    let mut lower = Vec::with_capacity(first.len());
    let mut upper = Vec::with_capacity(first.len());
    for (lo, hi) in planes {
        lower.extend_from_slice(&lo);
        upper.extend_from_slice(&hi);
    }
    Ok(VoxelwiseBounds {
        lower: Volume::new(dims, first.spacing(), lower)?,
        upper: Volume::new(dims, first.spacing(), upper)?,
        alpha,
    })
}

/// Sum of absolute voxel differences.
pub fn l1_distance(a: &Volume, b: &Volume) -> Result<f64, VolumeError> {
    if a.dims() != b.dims() {
        return Err(VolumeError::IncompatibleVolumes);
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
        .sum())
}

/// Values of the masked voxels in canonical x-fastest order.
pub fn mask_values(v: &Volume, m: &Mask) -> Result<Vec<f64>, VolumeError> {
    if v.dims() != m.dims() {
        return Err(VolumeError::IncompatibleVolumes);
    }
    let values: Vec<f64> = v
        .data()
        .iter()
        .zip(m.bits())
        .filter(|(_, &keep)| keep)
        .map(|(&v, _)| f64::from(v))
        .collect();
    if values.is_empty() {
        return Err(VolumeError::EmptyRegion);
    }
    Ok(values)
}

/// Convenience used by tests and bounds code: the same interpolated quantile
/// convention as `conformal::sample_quantile` applied to one voxel's samples.
pub fn voxel_quantile(samples: &[f64], level: f64) -> Result<f64, ConformalError> {
    crate::conformal::sample_quantile(samples, QuantileLevel::new(level)?)
}
