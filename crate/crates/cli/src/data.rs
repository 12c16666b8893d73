//! Cohort loading, cohort assignment and per-ROI feature extraction.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use radiomx_core::features::{extract, ExtractConfig, FeatureVector, Modality};
use radiomx_core::imgio::{read_mask, read_nrrd, to_2d_roi, Cohort, CohortManifest, Task};
use radiomx_core::resample::{crop_to_roi, resample_mask, resample_volume, ResampleAxes, ResampleSpec};
use radiomx_core::rng::{derive_seed, stream_rng};

use crate::config::ExperimentConfig;
use crate::split::split_patients;
use crate::table::{FeatureRow, FeatureTable};

/// Original-grid voxels kept around the mask before resampling. The spline
/// prefilter decays by 0.268 per voxel, so the crop cannot reach the ROI.
pub const RESAMPLE_MARGIN: usize = 8;

const STREAM_PERMUTE: u64 = 1;
const STREAM_ICC: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub id: String,
    pub labels: [Option<u8>; 3],
    pub cohort: Cohort,
    pub volume: PathBuf,
    pub mask_s1: PathBuf,
    pub mask_s2: Option<PathBuf>,
}

/// Session-1 patients sorted by id, with resolved paths. Labels are permuted
/// across patients when `permute_labels` is set.
pub fn load_patients(cfg: &ExperimentConfig) -> Result<Vec<Patient>> {
    let manifest = CohortManifest::load(cfg.manifest_path())
        .with_context(|| format!("loading cohort {}", cfg.cohort.display()))?;
    let s2: BTreeMap<&str, PathBuf> = manifest
        .session(2)
        .into_iter()
        .map(|r| (r.patient_id.as_str(), manifest.resolve(&r.mask)))
        .collect();
    let mut patients: Vec<Patient> = manifest
        .session(1)
        .into_iter()
        .map(|r| Patient {
            id: r.patient_id.clone(),
            labels: r.labels,
            cohort: r.cohort,
            volume: manifest.resolve(&r.volume),
            mask_s1: manifest.resolve(&r.mask),
            mask_s2: s2.get(r.patient_id.as_str()).cloned(),
        })
        .collect();
    if patients.len() < 4 {
        bail!("cohort has {} session-1 patients; at least 4 are needed", patients.len());
    }
    for &task in &cfg.tasks {
        let labelled = patients.iter().filter(|p| p.labels[task.index()].is_some()).count();
        if labelled == 0 {
            bail!("no patient carries a {task} label");
        }
    }
    if cfg.permute_labels {
        permute_labels(&mut patients, cfg.seed);
    }
    Ok(patients)
}

/// Shuffle each task's labels among the patients that carry one.
pub fn permute_labels(patients: &mut [Patient], seed: u64) {
    for task in Task::ALL {
        let t = task.index();
        let idx: Vec<usize> = (0..patients.len()).filter(|&i| patients[i].labels[t].is_some()).collect();
        let mut vals: Vec<Option<u8>> = idx.iter().map(|&i| patients[i].labels[t]).collect();
        vals.shuffle(&mut stream_rng(derive_seed(seed, STREAM_PERMUTE), t as u64));
        for (&i, v) in idx.iter().zip(vals) {
            patients[i].labels[t] = v;
        }
    }
}

/// Keep a complete manifest assignment; otherwise draw the seeded split.
pub fn assign_cohorts(patients: &mut [Patient], cfg: &ExperimentConfig) {
    let preset = patients.iter().all(|p| p.cohort != Cohort::Unassigned)
        && patients.iter().any(|p| p.cohort == Cohort::Training)
        && patients.iter().any(|p| p.cohort == Cohort::Validation);
    if preset {
        log::info!("using the training/validation assignment from the manifest");
        return;
    }
    let strata: Option<Vec<Option<bool>>> = cfg
        .stratify_split
        .then(|| patients.iter().map(|p| p.labels[cfg.tasks[0].index()].map(|l| l == 1)).collect());
    let cohorts = split_patients(patients.len(), strata.as_deref(), cfg.split_ratio, cfg.split_seed);
    for (p, c) in patients.iter_mut().zip(cohorts) {
        p.cohort = c;
    }
}

/// Training patients with a second-session mask, seeded sample of at most
/// `limit`, returned in id order.
pub fn icc_subset(patients: &[Patient], limit: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..patients.len())
        .filter(|&i| patients[i].cohort == Cohort::Training && patients[i].mask_s2.is_some())
        .collect();
    idx.shuffle(&mut stream_rng(derive_seed(seed, STREAM_ICC), 0));
    idx.truncate(limit);
    idx.sort_unstable();
    idx
}

/// Feature vectors of one ROI for several modalities. Volume and mask are
/// read once and resampled once per distinct spacing.
pub fn extract_roi(
    volume: &std::path::Path,
    mask: &std::path::Path,
    requests: &[(Modality, f64)],
    bin_count: usize,
) -> Result<Vec<FeatureVector>> {
    let v = read_nrrd(volume).with_context(|| format!("reading {}", volume.display()))?;
    let m = read_mask(mask).with_context(|| format!("reading {}", mask.display()))?;
    let (v, m) = crop_to_roi(&v, &m, RESAMPLE_MARGIN)?;
    let ecfg = ExtractConfig { bin_count };
    let mut grids: Vec<(f64, _, _)> = Vec::new();
    let mut out = Vec::with_capacity(requests.len());
    for &(modality, spacing) in requests {
        if !grids.iter().any(|(s, _, _)| *s == spacing) {
            let spec = ResampleSpec::new(spacing, ResampleAxes::All)?;
            let rv = resample_volume(&v, &spec)?;
            let rm = resample_mask(&m, &spec).with_context(|| format!("resampling {}", mask.display()))?;
            grids.push((spacing, rv, rm));
        }
        let (_, rv, rm) = grids.iter().find(|(s, _, _)| *s == spacing).unwrap();
        let fv = match modality {
            Modality::M2D => extract(rv, &to_2d_roi(rm)?, modality, &ecfg)?,
            _ => extract(rv, rm, modality, &ecfg)?,
        };
        out.push(fv);
    }
    Ok(out)
}

/// Slice thickness (z spacing) of a patient's volume, read from its header.
pub fn slice_thickness(p: &Patient) -> Result<f64> {
    Ok(read_nrrd(&p.volume)?.spacing()[2])
}

/// Tables for every requested modality, one row per patient in `rows`.
pub struct Extracted {
    pub tables: BTreeMap<Modality, FeatureTable>,
    /// Per-patient extraction seconds, in row order.
    pub timing: BTreeMap<Modality, Vec<(String, f64)>>,
}

/// Extract `rows` of `patients` for each `(modality, spacing)`; `session2`
/// selects the second-session mask. Patients run in parallel; output order
/// is fixed by patient id.
pub fn extract_tables(
    patients: &[Patient],
    rows: &[usize],
    requests: &[(Modality, f64)],
    bin_count: usize,
    session2: bool,
) -> Result<Extracted> {
    let per_patient: Vec<Vec<FeatureVector>> = rows
        .par_iter()
        .map(|&i| {
            let p = &patients[i];
            let mask = if session2 {
                p.mask_s2.as_ref().with_context(|| format!("{} has no second-session mask", p.id))?
            } else {
                &p.mask_s1
            };
            extract_roi(&p.volume, mask, requests, bin_count).with_context(|| format!("patient {}", p.id))
        })
        .collect::<Result<_>>()?;
    let mut tables = BTreeMap::new();
    let mut timing = BTreeMap::new();
    for (k, &(modality, _)) in requests.iter().enumerate() {
        let mut trows = Vec::with_capacity(rows.len());
        let mut t = Vec::with_capacity(rows.len());
        for (&i, fvs) in rows.iter().zip(&per_patient) {
            let p = &patients[i];
            trows.push(FeatureRow {
                patient_id: p.id.clone(),
                labels: p.labels,
                cohort: p.cohort,
                values: fvs[k].values.clone(),
            });
            t.push((p.id.clone(), fvs[k].extraction_seconds));
        }
        tables.insert(modality, FeatureTable::new(modality, trows));
        timing.insert(modality, t);
    }
    Ok(Extracted { tables, timing })
}

pub fn mean_seconds(t: &[(String, f64)]) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    t.iter().map(|(_, s)| s).sum::<f64>() / t.len() as f64
}
