//! Cohort directory layout.
//!
//! ```text
//! <root>/
//!   cohort.json              manifest: format version, config echo,
//!                            segmentation windows, metric list
//!   patient_<id>/
//!     gt.vol                 ground-truth volume
//!     recon_<j>.vol          reconstructions, j dense from 0
//!     masks/<organ>.msk      exact rasterization masks
//!     metrics.csv            patient_id,recon_id,metric,value
//!                            (recon_id -1 is the ground truth)
//! ```
//!
//! Writing is deterministic: the same cohort always produces byte-identical
//! trees. Loading validates that every referenced volume exists and parses.

use super::binary::{read_mask, read_volume, write_mask, write_volume};
use super::IoError;
use crate::cohort::{patient_dir_name, Cohort, CohortConfig, OrganWindow, PatientRecord};
use crate::metrics::{MetricSet, MetricSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const COHORT_FORMAT_VERSION: u32 = 1;

/// `cohort.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub format_version: u32,
    pub config: CohortConfig,
    pub organs: Vec<OrganWindow>,
    pub metrics: Vec<String>,
}

impl CohortManifest {
    pub fn metric_specs(&self) -> Result<Vec<MetricSpec>, IoError> {
        self.metrics
            .iter()
            .map(|name| {
                name.parse::<MetricSpec>()
                    .map_err(|_| IoError::Malformed(format!("bad metric name {name:?}")))
            })
            .collect()
    }
}

fn metrics_csv(patient: &PatientRecord, metric_names: &[String]) -> String {
    let mut out = String::from("patient_id,recon_id,metric,value\n");
    for name in metric_names {
        if let Some(truth) = patient.gt_metrics.get(name) {
            out.push_str(&format!("{},-1,{},{}\n", patient.id, name, truth));
        }
        if let Some(set) = patient.estimated.get(name) {
            for (j, value) in set.values.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", patient.id, j, name, value));
            }
        }
    }
    out
}

/// Materializes the cohort under `root`, overwriting files in place.
pub fn write_cohort(root: &Path, cohort: &Cohort) -> Result<(), IoError> {
    fs::create_dir_all(root)?;
    let manifest = CohortManifest {
        format_version: COHORT_FORMAT_VERSION,
        config: cohort.config.clone(),
        organs: cohort.organs.clone(),
        metrics: cohort.metrics.iter().map(|m| m.to_string()).collect(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(root.join("cohort.json"), manifest_json)?;

    let metric_names: Vec<String> = cohort.metrics.iter().map(|m| m.to_string()).collect();
    for patient in &cohort.patients {
        let dir = root.join(patient_dir_name(patient.id));
        fs::create_dir_all(dir.join("masks"))?;
        write_volume(&dir.join("gt.vol"), &patient.ground_truth)?;
        for (j, recon) in patient.reconstructions.iter().enumerate() {
            write_volume(&dir.join(format!("recon_{j}.vol")), recon)?;
        }
        for (name, mask) in &patient.exact_masks {
            write_mask(&dir.join("masks").join(format!("{name}.msk")), mask)?;
        }
        fs::write(dir.join("metrics.csv"), metrics_csv(patient, &metric_names))?;
    }
    Ok(())
}

/// Reads just the manifest.
pub fn load_manifest(root: &Path) -> Result<CohortManifest, IoError> {
    let text = fs::read_to_string(root.join("cohort.json"))?;
    let manifest: CohortManifest = serde_json::from_str(&text)?;
    if manifest.format_version != COHORT_FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(manifest.format_version));
    }
    Ok(manifest)
}

type PatientMetrics = (BTreeMap<String, f64>, BTreeMap<String, MetricSet>);

fn parse_metrics_csv(
    text: &str,
    patient_id: usize,
    n_recons: usize,
) -> Result<PatientMetrics, IoError> {
    let mut gt = BTreeMap::new();
    let mut estimates: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 {
            if line.trim() != "patient_id,recon_id,metric,value" {
                return Err(IoError::Malformed(format!("bad metrics.csv header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| IoError::Malformed(format!("metrics.csv line {}: {what}", line_no + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let recon_id: i64 = fields[1].parse().map_err(|_| bad("bad recon_id"))?;
        let metric = fields[2].to_owned();
        let value: f64 = fields[3].parse().map_err(|_| bad("bad value"))?;
        if recon_id < 0 {
            gt.insert(metric, value);
        } else {
            let slot = recon_id as usize;
            if slot >= n_recons {
                return Err(bad("recon_id out of range"));
            }
            estimates.entry(metric).or_insert_with(|| vec![None; n_recons])[slot] = Some(value);
        }
    }

    let mut sets = BTreeMap::new();
    for (metric, values) in estimates {
        let values: Option<Vec<f64>> = values.into_iter().collect();
        let values = values.ok_or_else(|| {
            IoError::Malformed(format!("metric {metric:?} has missing reconstruction rows"))
        })?;
        sets.insert(
            metric.clone(),
            MetricSet::new(patient_dir_name(patient_id), metric, values),
        );
    }
    Ok((gt, sets))
}

/// Loads a cohort directory back into memory, volumes included.
pub fn load_cohort(root: &Path) -> Result<Cohort, IoError> {
    let manifest = load_manifest(root)?;
    let specs = manifest.metric_specs()?;
    let mut patients = Vec::with_capacity(manifest.config.n_patients);
    for id in 0..manifest.config.n_patients {
        let dir = root.join(patient_dir_name(id));
        let ground_truth = read_volume(&dir.join("gt.vol"))?;
        let mut reconstructions = Vec::with_capacity(manifest.config.n_recons);
        for j in 0..manifest.config.n_recons {
            reconstructions.push(read_volume(&dir.join(format!("recon_{j}.vol")))?);
        }
        let mut exact_masks = BTreeMap::new();
        let masks_dir = dir.join("masks");
        if masks_dir.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(&masks_dir)?
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "msk"))
                .collect();
            entries.sort();
            for path in entries {
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| IoError::Malformed(format!("bad mask filename {path:?}")))?
                    .to_owned();
                exact_masks.insert(name, read_mask(&path)?);
            }
        }
        let csv = fs::read_to_string(dir.join("metrics.csv"))?;
        let (gt_metrics, estimated) = parse_metrics_csv(&csv, id, manifest.config.n_recons)?;
        patients.push(PatientRecord {
            id,
            ground_truth,
            exact_masks,
            reconstructions,
            gt_metrics,
            estimated,
        });
    }
    Ok(Cohort { config: manifest.config, organs: manifest.organs, metrics: specs, patients })
}
