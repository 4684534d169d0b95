//! Seeded synthetic cohorts: anatomy phantoms, probabilistic
//! reconstructions and per-metric ground truths.
//!
//! A cohort is a pure function of its [`CohortConfig`]. Streams are laid out
//! so subjects are i.i.d. and order-independent:
//!
//! - patient `i` owns the stream seed `derive_stream(config.seed, i)`;
//! - the phantom is sampled from child stream `0` of the patient seed;
//! - reconstruction `j` is simulated from child stream `1 + j`.
//!
//! Each reconstruction applies, in draw order: an integer voxel shift
//! (per-axis Gaussian with `shift_sigma`, rounded), a global intensity scale
//! `1 + γ` with `γ ~ N(0, intensity_jitter_sigma)`, and an additive Gaussian
//! white-noise field (`noise_sigma`) smoothed by a zero-padded box filter of
//! `smoothing_radius` voxels per axis. The smoothing correlates the noise
//! spatially, and the scale/shift terms move whole structures coherently —
//! the per-voxel quantile baseline has no way to express either, which is
//! the failure mode the coverage studies probe.
//!
//! Anatomy is a body ellipsoid holding two organs ("lung", "heart"), each
//! with a brighter core nested inside. Intensity levels and segmentation
//! windows are chosen so each organ, but not its core, survives window
//! segmentation of the extreme-valued per-voxel quantile images; estimated
//! metrics are extracted through the same window segmentation applied to
//! each reconstruction, so segmentation variability propagates into them.

use crate::metrics::{evaluate_metric, segment_threshold, MetricError, MetricSet, MetricSpec};
use crate::par::map_indexed;
use crate::rng::{derive_stream, SplitMix64};
use crate::volume::{Mask, Volume, VolumeError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("invalid cohort config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Generator configuration; the whole cohort is a deterministic function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_patients: usize,
    /// Reconstructions per patient; at least 2 so quantile bands are
    /// non-degenerate in general.
    pub n_recons: usize,
    pub dims: [usize; 3],
    /// Voxel pitch in mm.
    pub spacing: [f32; 3],
    pub seed: u64,
    /// Standard deviation of the white-noise field before smoothing.
    pub noise_sigma: f64,
    /// Box-filter radius in voxels; 0 disables smoothing.
    pub smoothing_radius: usize,
    /// Per-axis standard deviation of the voxel shift, in voxels.
    pub shift_sigma: f64,
    /// Standard deviation of the global multiplicative intensity jitter.
    pub intensity_jitter_sigma: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_patients: 20,
            n_recons: 10,
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            seed: 42,
            noise_sigma: 0.45,
            smoothing_radius: 2,
            shift_sigma: 0.3,
            intensity_jitter_sigma: 0.03,
        }
    }
}

impl CohortConfig {
    /// Zero out every randomness source; reconstructions then equal the
    /// ground truth bit for bit.
    pub fn without_noise(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.shift_sigma = 0.0;
        self.intensity_jitter_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let fail = |msg: &str| Err(CohortError::InvalidConfig(msg.to_owned()));
        if self.n_patients == 0 {
            return fail("n_patients must be at least 1");
        }
        if self.n_recons < 2 {
            return fail("n_recons must be at least 2");
        }
        if self.dims.iter().any(|&d| d < 8) {
            return fail("dims must be at least 8 voxels per axis");
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return fail("spacing components must be positive");
        }
        for (value, name) in [
            (self.noise_sigma, "noise_sigma"),
            (self.shift_sigma, "shift_sigma"),
            (self.intensity_jitter_sigma, "intensity_jitter_sigma"),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return fail(&format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Window-threshold segmentation table entry for one organ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganWindow {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

// Phantom intensity design. Levels sit inside their organ's segmentation
// window with margin, while the cores exceed the window's ceiling after the
// upper-quantile intensity inflation of the pixel-wise bound images.
const BODY_LEVEL: (f64, f64) = (0.95, 1.05);
const LUNG_LEVEL: (f64, f64) = (2.10, 2.25);
const LUNG_CORE_LEVEL: (f64, f64) = (2.62, 2.72);
const HEART_LEVEL: (f64, f64) = (4.15, 4.30);
const HEART_CORE_LEVEL: (f64, f64) = (4.75, 4.88);
const LUNG_WINDOW: (f64, f64) = (1.95, 2.75);
const HEART_WINDOW: (f64, f64) = (3.60, 4.92);

/// Minimum organ semi-axis in voxels so every organ rasterizes to at least
/// one voxel even on small grids.
const MIN_ORGAN_SEMI: f64 = 1.6;

/// Segmentation windows for the default anatomy.
pub fn default_organ_windows() -> Vec<OrganWindow> {
    vec![
        OrganWindow { name: "lung".to_owned(), lo: LUNG_WINDOW.0, hi: LUNG_WINDOW.1 },
        OrganWindow { name: "heart".to_owned(), lo: HEART_WINDOW.0, hi: HEART_WINDOW.1 },
    ]
}

/// The four default downstream metrics.
pub fn default_metric_specs() -> Vec<MetricSpec> {
    ["region_max:heart", "region_volume:lung", "v_above:2.55:lung", "d_at_v:35:lung"]
        .iter()
        .map(|s| s.parse().expect("default metric specs parse"))
        .collect()
}

/// Axis-aligned ellipsoid in voxel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
}

impl Ellipsoid {
    /// Squared norm of the point in the ellipsoid's unit coordinates.
    pub fn normalized_sq(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| {
                let d = (p[a] - self.center[a]) / self.semi_axes[a];
                d * d
            })
            .sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.normalized_sq(p) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrganShape {
    pub name: String,
    pub shape: Ellipsoid,
    pub intensity: f64,
}

/// Sampled anatomy: a body ellipsoid and nested organ ellipsoids with
/// constant interior intensities. Organs are listed parents-first so
/// rasterization ("later entry wins") realizes innermost-wins.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub body: Ellipsoid,
    pub body_intensity: f64,
    pub background: f64,
    pub organs: Vec<OrganShape>,
}

fn uniform_in(rng: &mut SplitMix64, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.next_f64()
}

fn unit_direction(rng: &mut SplitMix64) -> [f64; 3] {
    loop {
        let d = [rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if norm > 1e-9 {
            return [d[0] / norm, d[1] / norm, d[2] / norm];
        }
    }
}

/// Places a child ellipsoid strictly inside `parent`.
///
/// With per-axis extent ratio `rho = max(child_semi / parent_semi)` and the
/// child's center at normalized radius `r <= 0.9 (1 - rho)`, every child
/// point satisfies `|(p - C)/A| <= r + rho < 1`, so containment holds by
/// construction.
fn place_inside(
    rng: &mut SplitMix64,
    parent: &Ellipsoid,
    semi_axes: [f64; 3],
    radius_range: (f64, f64),
    x_sign: f64,
) -> Ellipsoid {
    let rho = (0..3)
        .map(|a| semi_axes[a] / parent.semi_axes[a])
        .fold(0.0, f64::max);
    let mut dir = unit_direction(rng);
    if x_sign != 0.0 {
        dir[0] = dir[0].abs() * x_sign;
    }
    let radius = uniform_in(rng, radius_range) * 0.9 * (1.0 - rho).max(0.0);
    let mut center = [0.0; 3];
    for a in 0..3 {
        center[a] = parent.center[a] + parent.semi_axes[a] * radius * dir[a];
    }
    Ellipsoid { center, semi_axes }
}

/// Draws a phantom from fixed distributions over plausible fractions of the
/// grid. Identical stream state yields an identical phantom.
pub fn sample_phantom(rng: &mut SplitMix64, dims: [usize; 3]) -> Phantom {
    let mut body_semi = [0.0; 3];
    for axis in &mut body_semi {
        *axis = uniform_in(rng, (0.36, 0.44));
    }
    let mut body_center = [0.0; 3];
    for a in 0..3 {
        body_center[a] = dims[a] as f64 * (0.5 + uniform_in(rng, (-0.02, 0.02)));
        body_semi[a] *= dims[a] as f64;
    }
    let body = Ellipsoid { center: body_center, semi_axes: body_semi };
    let body_intensity = uniform_in(rng, BODY_LEVEL);

    let mut organs = Vec::with_capacity(4);
    let parent_with_core = |rng: &mut SplitMix64,
                                organs: &mut Vec<OrganShape>,
                                name: &str,
                                semi_frac: (f64, f64),
                                x_sign: f64,
                                level: (f64, f64),
                                core_level: (f64, f64)| {
        let mut semis = [0.0; 3];
        for (a, axis) in semis.iter_mut().enumerate() {
            *axis = (uniform_in(rng, semi_frac) * dims[a] as f64).max(MIN_ORGAN_SEMI);
        }
        let shape = place_inside(rng, &body, semis, (0.25, 0.9), x_sign);
        let intensity = uniform_in(rng, level);

        let factor = uniform_in(rng, (0.48, 0.60));
        let core_semis = [
            shape.semi_axes[0] * factor,
            shape.semi_axes[1] * factor,
            shape.semi_axes[2] * factor,
        ];
        let core_shape = place_inside(rng, &shape, core_semis, (0.0, 1.0), 0.0);
        let core_intensity = uniform_in(rng, core_level);

        organs.push(OrganShape { name: name.to_owned(), shape, intensity });
        organs.push(OrganShape {
            name: format!("{name}_core"),
            shape: core_shape,
            intensity: core_intensity,
        });
    };

    parent_with_core(rng, &mut organs, "lung", (0.14, 0.19), 1.0, LUNG_LEVEL, LUNG_CORE_LEVEL);
    parent_with_core(rng, &mut organs, "heart", (0.09, 0.13), -1.0, HEART_LEVEL, HEART_CORE_LEVEL);

    Phantom { body, body_intensity, background: 0.0, organs }
}

/// Contiguous x-range of voxel centers inside the ellipsoid at row `(y, z)`:
/// solve the quadratic form for x instead of testing every voxel.
fn ellipsoid_row_span(e: &Ellipsoid, y: usize, z: usize, nx: usize) -> Option<(usize, usize)> {
    let dy = (y as f64 + 0.5 - e.center[1]) / e.semi_axes[1];
    let dz = (z as f64 + 0.5 - e.center[2]) / e.semi_axes[2];
    let rem = 1.0 - dy * dy - dz * dz;
    if rem < 0.0 {
        return None;
    }
    let half = e.semi_axes[0] * rem.sqrt();
    let lo = (e.center[0] - 0.5 - half).ceil();
    let hi = (e.center[0] - 0.5 + half).floor();
    let lo = lo.max(0.0);
    let hi = hi.min(nx as f64 - 1.0);
    if lo > hi {
        return None;
    }
    Some((lo as usize, hi as usize))
}

fn paint_ellipsoid(
    e: &Ellipsoid,
    dims: [usize; 3],
    mut row: impl FnMut(usize, usize, usize),
) {
    let z_lo = ((e.center[2] - e.semi_axes[2] - 0.5).ceil()).max(0.0) as usize;
    let z_hi = ((e.center[2] + e.semi_axes[2] - 0.5).floor()).min(dims[2] as f64 - 1.0);
    let y_lo = ((e.center[1] - e.semi_axes[1] - 0.5).ceil()).max(0.0) as usize;
    let y_hi = ((e.center[1] + e.semi_axes[1] - 0.5).floor()).min(dims[1] as f64 - 1.0);
    if z_hi < 0.0 || y_hi < 0.0 {
        return;
    }
    for z in z_lo..=z_hi as usize {
        for y in y_lo..=y_hi as usize {
            if let Some((x_lo, x_hi)) = ellipsoid_row_span(e, y, z, dims[0]) {
                row(x_lo, x_hi, y + dims[1] * z);
            }
        }
    }
}

/// Rasterizes the phantom: a voxel whose center falls inside an ellipsoid
/// takes that ellipsoid's intensity, with later (nested) organs overriding
/// earlier ones. Also emits the exact geometric mask of the body and of
/// every organ.
pub fn render_ground_truth(
    phantom: &Phantom,
    dims: [usize; 3],
    spacing: [f32; 3],
) -> Result<(Volume, BTreeMap<String, Mask>), CohortError> {
    let len = dims[0] * dims[1] * dims[2];
    let mut data = vec![phantom.background as f32; len];
    let mut body_bits = vec![false; len];

    paint_ellipsoid(&phantom.body, dims, |x_lo, x_hi, row_idx| {
        let offset = row_idx * dims[0];
        data[offset + x_lo..=offset + x_hi].fill(phantom.body_intensity as f32);
        body_bits[offset + x_lo..=offset + x_hi].fill(true);
    });

    let mut masks = BTreeMap::new();
    masks.insert("body".to_owned(), Mask::new(dims, body_bits)?);
    for organ in &phantom.organs {
        let mut bits = vec![false; len];
        paint_ellipsoid(&organ.shape, dims, |x_lo, x_hi, row_idx| {
            let offset = row_idx * dims[0];
            data[offset + x_lo..=offset + x_hi].fill(organ.intensity as f32);
            bits[offset + x_lo..=offset + x_hi].fill(true);
        });
        masks.insert(organ.name.clone(), Mask::new(dims, bits)?);
    }
    Ok((Volume::new(dims, spacing, data)?, masks))
}

/// Zero-padded separable box filter with a fixed `(2r+1)` divisor per pass.
fn box_smooth_3d(data: &mut [f32], dims: [usize; 3], radius: usize) {
    for axis in 0..3 {
        smooth_axis(data, dims, axis, radius);
    }
}

/// One box-filter pass along `axis`, zero padding, fixed `(2r+1)` divisor.
///
/// The volume is viewed as `outer` blocks of `len` contiguous chunks of
/// `inner` values each; a sliding f64 accumulator walks the chunks while a
/// ring buffer retains the original values pending subtraction, so every
/// access is contiguous regardless of axis.
fn smooth_axis(data: &mut [f32], dims: [usize; 3], axis: usize, radius: usize) {
    let (outer_count, len, inner) = match axis {
        0 => (dims[1] * dims[2], dims[0], 1),
        1 => (dims[2], dims[1], dims[0]),
        _ => (1, dims[2], dims[0] * dims[1]),
    };
    let inv = 1.0 / (2 * radius + 1) as f64;
    let ring_slots = (2 * radius + 1).min(len);

    if inner == 1 {
        // Scalar sliding window over contiguous rows.
        let mut ring = vec![0.0f32; ring_slots];
        for outer in 0..outer_count {
            let row = &mut data[outer * len..(outer + 1) * len];
            let mut acc = 0.0f64;
            for i in 0..=radius.min(len - 1) {
                ring[i % ring_slots] = row[i];
                acc += f64::from(row[i]);
            }
            for i in 0..len {
                if i > 0 && i + radius < len {
                    let slot = (i + radius) % ring_slots;
                    ring[slot] = row[i + radius];
                    acc += f64::from(row[i + radius]);
                }
                row[i] = (acc * inv) as f32;
                if i >= radius {
                    acc -= f64::from(ring[(i - radius) % ring_slots]);
                }
            }
        }
        return;
    }

    let mut ring = vec![0.0f32; ring_slots * inner];
    let mut acc = vec![0.0f64; inner];

    let stash = |ring: &mut [f32], acc: &mut [f64], data: &[f32], base: usize, chunk: usize| {
        let slot = chunk % ring_slots;
        let src = &data[base + chunk * inner..base + (chunk + 1) * inner];
        ring[slot * inner..(slot + 1) * inner].copy_from_slice(src);
        for (a, v) in acc.iter_mut().zip(src) {
            *a += f64::from(*v);
        }
    };

    for outer in 0..outer_count {
        let base = outer * len * inner;
        acc.iter_mut().for_each(|a| *a = 0.0);
        for chunk in 0..=radius.min(len - 1) {
            stash(&mut ring, &mut acc, data, base, chunk);
        }
        for i in 0..len {
            if i > 0 && i + radius < len {
                stash(&mut ring, &mut acc, data, base, i + radius);
            }
            let out = &mut data[base + i * inner..base + (i + 1) * inner];
            for (v, a) in out.iter_mut().zip(&acc) {
                *v = (*a * inv) as f32;
            }
            if i >= radius {
                let slot = (i - radius) % ring_slots;
                for (a, v) in acc.iter_mut().zip(&ring[slot * inner..(slot + 1) * inner]) {
                    *a -= f64::from(*v);
                }
            }
        }
    }
}

/// One probabilistic reconstruction of `gt`.
///
/// Draw order on the stream: shift x, y, z; jitter; then one Gaussian per
/// voxel in x-fastest order (skipped entirely when `noise_sigma == 0`).
/// Voxels shifted in from outside the grid read as 0.
pub fn simulate_reconstruction(
    gt: &Volume,
    rng: &mut SplitMix64,
    cfg: &CohortConfig,
) -> Result<Volume, CohortError> {
    let dims = gt.dims();
    let mut shift = [0i64; 3];
    for s in &mut shift {
        *s = (rng.next_gaussian() * cfg.shift_sigma).round() as i64;
    }
    let gamma = rng.next_gaussian() * cfg.intensity_jitter_sigma;
    let scale = (1.0 + gamma) as f32;

    let mut data = vec![0.0f32; gt.len()];
    let (dx, dy, dz) = (dims[0] as i64, dims[1] as i64, dims[2] as i64);
    let x_lo = shift[0].max(0) as usize;
    let x_hi = (dx + shift[0]).min(dx).max(0) as usize;
    for z in 0..dims[2] {
        let src_z = z as i64 - shift[2];
        if src_z < 0 || src_z >= dz {
            continue;
        }
        for y in 0..dims[1] {
            let src_y = y as i64 - shift[1];
            if src_y < 0 || src_y >= dy {
                continue;
            }
            let dst_row = gt.index(0, y, z);
            let src_row = gt.index(0, src_y as usize, src_z as usize);
            for x in x_lo..x_hi {
                let src_x = (x as i64 - shift[0]) as usize;
                data[dst_row + x] = gt.data()[src_row + src_x] * scale;
            }
        }
    }

    if cfg.noise_sigma > 0.0 {
        let mut noise = vec![0.0f32; gt.len()];
        rng.fill_gaussian_f32(&mut noise, cfg.noise_sigma);
        if cfg.smoothing_radius > 0 {
            box_smooth_3d(&mut noise, dims, cfg.smoothing_radius);
        }
        for (out, n) in data.iter_mut().zip(&noise) {
            *out += *n;
        }
    }

    Ok(Volume::new(dims, gt.spacing(), data)?)
}

/// Window-threshold masks for every organ in the table, full-grid ROI.
pub fn segment_organs(
    v: &Volume,
    organs: &[OrganWindow],
) -> Result<BTreeMap<String, Mask>, MetricError> {
    let roi = Mask::full(v.dims()).map_err(MetricError::Volume)?;
    let mut masks = BTreeMap::new();
    for organ in organs {
        masks.insert(organ.name.clone(), segment_threshold(v, organ.lo, organ.hi, &roi)?);
    }
    Ok(masks)
}

/// Metric value for a reconstruction, treating an empty segmentation as a
/// reading of 0 ("the segmenter found nothing") rather than an error —
/// extreme jitter can legitimately push a whole organ out of its window.
fn estimated_value(
    spec: &MetricSpec,
    v: &Volume,
    masks: &BTreeMap<String, Mask>,
) -> Result<f64, MetricError> {
    match evaluate_metric(spec, v, masks) {
        Err(MetricError::Volume(VolumeError::EmptyRegion)) => Ok(0.0),
        other => other,
    }
}

/// One patient: ground truth, exact masks, reconstruction set and the
/// extracted metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: usize,
    pub ground_truth: Volume,
    /// Geometric rasterization masks ("body" plus each organ).
    pub exact_masks: BTreeMap<String, Mask>,
    pub reconstructions: Vec<Volume>,
    /// Ground-truth metric value keyed by canonical metric name.
    pub gt_metrics: BTreeMap<String, f64>,
    /// Estimated metric values keyed by canonical metric name.
    pub estimated: BTreeMap<String, MetricSet>,
}

impl PatientRecord {
    pub fn estimated_for(&self, metric_name: &str) -> Option<&MetricSet> {
        self.estimated.get(metric_name)
    }

    pub fn gt_for(&self, metric_name: &str) -> Option<f64> {
        self.gt_metrics.get(metric_name).copied()
    }
}

/// Directory name used for a patient id in the on-disk layout.
pub fn patient_dir_name(id: usize) -> String {
    format!("patient_{id}")
}

/// A generated (or loaded) cohort together with its segmentation table and
/// metric list.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub config: CohortConfig,
    pub organs: Vec<OrganWindow>,
    pub metrics: Vec<MetricSpec>,
    pub patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn organ_window(&self, name: &str) -> Option<&OrganWindow> {
        self.organs.iter().find(|o| o.name == name)
    }
}

/// Generates one patient, independent of every other patient's streams.
pub fn generate_patient(
    cfg: &CohortConfig,
    organs: &[OrganWindow],
    specs: &[MetricSpec],
    index: usize,
) -> Result<PatientRecord, CohortError> {
    let patient_seed = derive_stream(cfg.seed, index as u64);
    let mut phantom_rng = SplitMix64::new(derive_stream(patient_seed, 0));
    let phantom = sample_phantom(&mut phantom_rng, cfg.dims);
    let (ground_truth, exact_masks) = render_ground_truth(&phantom, cfg.dims, cfg.spacing)?;

    let gt_segmentation = segment_organs(&ground_truth, organs)?;
    let mut gt_metrics = BTreeMap::new();
    for spec in specs {
        gt_metrics.insert(spec.to_string(), evaluate_metric(spec, &ground_truth, &gt_segmentation)?);
    }

    let patient_id = patient_dir_name(index);
    let mut reconstructions = Vec::with_capacity(cfg.n_recons);
    let mut values: BTreeMap<String, Vec<f64>> =
        specs.iter().map(|s| (s.to_string(), Vec::with_capacity(cfg.n_recons))).collect();
    for j in 0..cfg.n_recons {
        let mut recon_rng = SplitMix64::new(derive_stream(patient_seed, 1 + j as u64));
        let recon = simulate_reconstruction(&ground_truth, &mut recon_rng, cfg)?;
        let segmentation = segment_organs(&recon, organs)?;
        for spec in specs {
            values
                .get_mut(&spec.to_string())
                .expect("spec key present")
                .push(estimated_value(spec, &recon, &segmentation)?);
        }
        reconstructions.push(recon);
    }

    let estimated = values
        .into_iter()
        .map(|(name, vals)| {
            (name.clone(), MetricSet::new(patient_id.clone(), name, vals))
        })
        .collect();

    Ok(PatientRecord {
        id: index,
        ground_truth,
        exact_masks,
        reconstructions,
        gt_metrics,
        estimated,
    })
}

/// Generates a cohort with an explicit segmentation table and metric list.
pub fn generate_cohort_with(
    cfg: &CohortConfig,
    organs: &[OrganWindow],
    specs: &[MetricSpec],
) -> Result<Cohort, CohortError> {
    cfg.validate()?;
    for spec in specs {
        if !organs.iter().any(|o| o.name == spec.region) {
            return Err(CohortError::Metric(MetricError::UnknownRegion(spec.region.clone())));
        }
    }
    let results = map_indexed(cfg.n_patients, |i| generate_patient(cfg, organs, specs, i));
    let mut patients = Vec::with_capacity(cfg.n_patients);
    for record in results {
        patients.push(record?);
    }
    Ok(Cohort {
        config: cfg.clone(),
        organs: organs.to_vec(),
        metrics: specs.to_vec(),
        patients,
    })
}

/// Generates a cohort with the default anatomy windows and metrics.
pub fn generate_cohort(cfg: &CohortConfig) -> Result<Cohort, CohortError> {
    generate_cohort_with(cfg, &default_organ_windows(), &default_metric_specs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> CohortConfig {
        CohortConfig {
            n_patients: 3,
            n_recons: 3,
            dims: [16, 16, 16],
            seed: 7,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(CohortConfig::default().validate().is_ok());
        let cfg = CohortConfig { n_recons: 1, ..CohortConfig::default() };
        assert!(matches!(cfg.validate(), Err(CohortError::InvalidConfig(_))));
        let cfg = CohortConfig { dims: [4, 64, 64], ..CohortConfig::default() };
        assert!(matches!(cfg.validate(), Err(CohortError::InvalidConfig(_))));
        let cfg = CohortConfig { noise_sigma: -1.0, ..CohortConfig::default() };
        assert!(matches!(cfg.validate(), Err(CohortError::InvalidConfig(_))));
        // Zero noise is a valid, fully degenerate configuration.
        assert!(CohortConfig::default().without_noise().validate().is_ok());
    }

    #[test]
    fn phantom_sampling_is_deterministic() {
        let a = sample_phantom(&mut SplitMix64::new(123), [32, 32, 32]);
        let b = sample_phantom(&mut SplitMix64::new(123), [32, 32, 32]);
        assert_eq!(a, b);
    }

    #[test]
    fn phantoms_differ_across_seeds() {
        let mut distinct = 0;
        let reference = sample_phantom(&mut SplitMix64::new(0), [32, 32, 32]);
        for seed in 1..=100 {
            let other = sample_phantom(&mut SplitMix64::new(seed), [32, 32, 32]);
            if other != reference {
                distinct += 1;
            }
        }
        assert_eq!(distinct, 100);
    }

    #[test]
    fn organs_stay_inside_body_for_1000_samples() {
        // Check the sampled surface of each organ against the body form.
        let dirs: Vec<[f64; 3]> = {
            let mut rng = SplitMix64::new(99);
            (0..64).map(|_| unit_direction(&mut rng)).collect()
        };
        for seed in 0..1000 {
            let phantom = sample_phantom(&mut SplitMix64::new(seed), [48, 48, 48]);
            for organ in &phantom.organs {
                for d in &dirs {
                    let surface = [
                        organ.shape.center[0] + organ.shape.semi_axes[0] * d[0],
                        organ.shape.center[1] + organ.shape.semi_axes[1] * d[1],
                        organ.shape.center[2] + organ.shape.semi_axes[2] * d[2],
                    ];
                    assert!(
                        phantom.body.normalized_sq(surface) <= 1.0,
                        "organ {} pokes out of body at seed {seed}",
                        organ.name
                    );
                }
            }
        }
    }

    #[test]
    fn render_empty_organ_list_is_uniform_body() {
        let phantom = Phantom {
            body: Ellipsoid { center: [8.0, 8.0, 8.0], semi_axes: [6.0, 6.0, 6.0] },
            body_intensity: 1.0,
            background: 0.0,
            organs: vec![],
        };
        let (v, masks) = render_ground_truth(&phantom, [16, 16, 16], [1.0; 3]).unwrap();
        let body = &masks["body"];
        for (value, &inside) in v.data().iter().zip(body.bits()) {
            assert_eq!(*value, if inside { 1.0 } else { 0.0 });
        }
        assert_eq!(masks.len(), 1);
    }

    #[test]
    fn rasterized_sphere_volume_tracks_analytic_value() {
        let phantom = Phantom {
            body: Ellipsoid { center: [16.0, 16.0, 16.0], semi_axes: [15.0, 15.0, 15.0] },
            body_intensity: 1.0,
            background: 0.0,
            organs: vec![OrganShape {
                name: "sphere".to_owned(),
                shape: Ellipsoid { center: [16.0, 16.0, 16.0], semi_axes: [10.0, 10.0, 10.0] },
                intensity: 2.0,
            }],
        };
        let (_, masks) = render_ground_truth(&phantom, [32, 32, 32], [1.0; 3]).unwrap();
        let count = masks["sphere"].count_true() as f64;
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        assert!((count - analytic).abs() / analytic < 0.05, "count {count} vs {analytic}");
    }

    #[test]
    fn organ_masks_are_subsets_of_body() {
        let phantom = sample_phantom(&mut SplitMix64::new(5), [24, 24, 24]);
        let (_, masks) = render_ground_truth(&phantom, [24, 24, 24], [1.0; 3]).unwrap();
        let body = masks["body"].bits().to_vec();
        for (name, mask) in &masks {
            if name == "body" {
                continue;
            }
            for (i, &bit) in mask.bits().iter().enumerate() {
                assert!(!bit || body[i], "{name} escapes the body at voxel {i}");
            }
        }
    }

    #[test]
    fn zero_noise_reconstruction_is_bit_exact() {
        let cfg = CohortConfig { dims: [16, 16, 16], ..CohortConfig::default() }.without_noise();
        let phantom = sample_phantom(&mut SplitMix64::new(1), cfg.dims);
        let (gt, _) = render_ground_truth(&phantom, cfg.dims, cfg.spacing).unwrap();
        let recon = simulate_reconstruction(&gt, &mut SplitMix64::new(2), &cfg).unwrap();
        assert_eq!(recon.data(), gt.data());
    }

    #[test]
    fn reconstruction_is_deterministic_per_stream() {
        let cfg = CohortConfig { dims: [16, 16, 16], ..CohortConfig::default() };
        let phantom = sample_phantom(&mut SplitMix64::new(1), cfg.dims);
        let (gt, _) = render_ground_truth(&phantom, cfg.dims, cfg.spacing).unwrap();
        let a = simulate_reconstruction(&gt, &mut SplitMix64::new(77), &cfg).unwrap();
        let b = simulate_reconstruction(&gt, &mut SplitMix64::new(77), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_reconstruction(&gt, &mut SplitMix64::new(78), &cfg).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn reconstruction_mean_approaches_ground_truth() {
        // Shifts and jitter disabled, raw (unsmoothed) noise: the mean of
        // 200 reconstructions converges at the 1/sqrt(200) rate.
        let cfg = CohortConfig {
            dims: [16, 16, 16],
            noise_sigma: 0.5,
            smoothing_radius: 0,
            shift_sigma: 0.0,
            intensity_jitter_sigma: 0.0,
            ..CohortConfig::default()
        };
        let phantom = sample_phantom(&mut SplitMix64::new(3), cfg.dims);
        let (gt, _) = render_ground_truth(&phantom, cfg.dims, cfg.spacing).unwrap();
        let n = 200;
        let mut sums = vec![0.0f64; gt.len()];
        for j in 0..n {
            let mut rng = SplitMix64::new(derive_stream(900, j));
            let recon = simulate_reconstruction(&gt, &mut rng, &cfg).unwrap();
            for (s, v) in sums.iter_mut().zip(recon.data()) {
                *s += f64::from(*v);
            }
        }
        let bound = 6.0 * cfg.noise_sigma / (n as f64).sqrt();
        let worst = sums
            .iter()
            .zip(gt.data())
            .map(|(s, g)| (s / n as f64 - f64::from(*g)).abs())
            .fold(0.0, f64::max);
        assert!(worst < bound, "worst deviation {worst} exceeds {bound}");
    }

    #[test]
    fn smoothing_shrinks_noise_variance() {
        let dims = [16, 16, 16];
        let mut rng = SplitMix64::new(4);
        let mut field: Vec<f32> = (0..16 * 16 * 16).map(|_| rng.next_gaussian() as f32).collect();
        let raw_var: f64 =
            field.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>() / field.len() as f64;
        box_smooth_3d(&mut field, dims, 2);
        let smooth_var: f64 =
            field.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>() / field.len() as f64;
        // A radius-2 box filter averages 125 voxels.
        assert!(smooth_var < raw_var / 50.0, "raw {raw_var} smooth {smooth_var}");
    }

    #[test]
    fn cohort_generation_is_deterministic() {
        let cfg = small_cfg();
        let a = generate_cohort(&cfg).unwrap();
        let b = generate_cohort(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn patients_are_stream_independent() {
        let cfg = small_cfg();
        let cohort = generate_cohort(&cfg).unwrap();
        let standalone =
            generate_patient(&cfg, &default_organ_windows(), &default_metric_specs(), 2).unwrap();
        assert_eq!(cohort.patients[2], standalone);
    }

    #[test]
    fn default_phantom_metrics_are_well_posed() {
        // Ground-truth values must exist and v_above must sit strictly
        // inside (0, 100) so coverage flags are informative.
        let cfg = CohortConfig { n_patients: 6, dims: [32, 32, 32], ..CohortConfig::default() };
        let cohort = generate_cohort(&cfg).unwrap();
        for patient in &cohort.patients {
            let v_above = patient.gt_for("v_above:2.55:lung").unwrap();
            assert!(v_above > 0.0 && v_above < 100.0, "v_above GT {v_above}");
            let d0 = patient.gt_for("region_max:heart").unwrap();
            assert!((4.7..5.0).contains(&d0), "heart max GT {d0}");
            let vol = patient.gt_for("region_volume:lung").unwrap();
            assert!(vol > 0.0);
            let d35 = patient.gt_for("d_at_v:35:lung").unwrap();
            assert!((2.0..2.8).contains(&d35), "lung D35 GT {d35}");
            for (name, set) in &patient.estimated {
                assert_eq!(set.values.len(), cfg.n_recons, "{name}");
                assert!(set.values.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn unknown_metric_region_is_rejected() {
        let specs = vec!["region_max:spleen".parse::<MetricSpec>().unwrap()];
        let err = generate_cohort_with(&small_cfg(), &default_organ_windows(), &specs).unwrap_err();
        assert!(matches!(err, CohortError::Metric(MetricError::UnknownRegion(_))));
    }
}
