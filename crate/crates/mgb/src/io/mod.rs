//! On-disk formats: binary volume/mask files, the cohort directory layout,
//! and JSON/CSV report serialization.
//!
//! All formats are normative and bit-stable: identical in-memory values
//! always serialize to identical bytes, and every numeric field round-trips
//! exactly (floats are rendered with shortest round-trip decimals; binary
//! payloads are little-endian IEEE-754).

pub mod binary;
pub mod layout;
pub mod reports;

pub use binary::{read_mask, read_volume, write_mask, write_volume};
pub use layout::{load_cohort, load_manifest, write_cohort, CohortManifest};
pub use reports::{
    read_calibration, read_float_column, write_calibration, CalibrationJson, IntervalJson,
    RetrievalJson, TTestJson,
};

use crate::cohort::CohortError;
use crate::metrics::MetricError;
use crate::volume::VolumeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file")]
    Truncated,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}
