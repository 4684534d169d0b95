//! Metric-guided reconstruction bounds.
//!
//! Probabilistic image reconstruction produces a *set* of candidate volumes
//! per subject. This crate calibrates distribution-free prediction intervals
//! for scalar downstream metrics of those reconstructions (conformalized
//! quantile regression with a split calibration cohort), retrieves the
//! reconstructions realizing the calibrated bounds together with the
//! statistical inlier/outlier partition, and validates coverage against the
//! conventional per-voxel quantile baseline on synthetic exchangeable
//! cohorts.
//!
//! Module map:
//!
//! - [`conformal`] — sample quantiles, CQR nonconformity scores, offset
//!   calibration and prediction intervals.
//! - [`volume`] — 3-D scalar fields, masks and per-voxel quantile bounds.
//! - [`metrics`] — scalar extractors (region max, dose-at-volume-fraction,
//!   volume-fraction-above, region volume) and threshold segmentation.
//! - [`retrieval`] — bound-realizing reconstruction lookup, inlier/outlier
//!   partition and retrieval error.
//! - [`cohort`] — seeded synthetic phantom cohorts with reproducible
//!   reconstruction randomness.
//! - [`evaluation`] — leave-one-out and Monte Carlo coverage studies,
//!   pixel-wise baseline coverage and paired t-tests.
//! - [`io`] — binary volume/mask formats, cohort directory layout and
//!   report serialization.

pub mod cohort;
pub mod conformal;
pub mod evaluation;
pub mod io;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod volume;

mod par;
mod special;

pub use cohort::{Cohort, CohortConfig, PatientRecord};
pub use conformal::{CalibrationResult, PredictionInterval, QuantileLevel};
pub use metrics::{MetricSet, MetricSpec};
pub use retrieval::RetrievalReport;
pub use volume::{Mask, Volume};
