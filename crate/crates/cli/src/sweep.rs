//! Auxiliary sweep: for each spacing and random 7:3 repartition, a capped
//! selection and a fixed logistic model per task and modality. The AUC
//! samples of 2D and 3D are compared with a U test per (task, spacing).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use radiomx_core::features::Modality;
use radiomx_core::imgio::{Cohort, Task};
use radiomx_core::learn::{logistic_fit, DEFAULT_L2};
use radiomx_core::rng::{derive_seed, stream_rng};
use radiomx_core::select::{run_selection, SelectionInput};
use radiomx_core::stats::{auc, mann_whitney, zscore_fit};

use crate::config::ExperimentConfig;
use crate::data::{extract_tables, load_patients, mean_seconds, Patient};
use crate::pipeline::{columns, write_json};
use crate::split::split_patients;
use crate::table::{FeatureRow, FeatureTable};

pub const SAMPLES_FILE: &str = "aux_auc_samples.csv";
pub const REPORT_FILE: &str = "aux_report.json";
pub const TIMING_FILE: &str = "aux_timing.csv";

const STREAM_AUX: u64 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSample {
    pub task: Task,
    pub spacing: f64,
    pub modality: Modality,
    pub repartition: usize,
    pub auc: f64,
    pub n_selected: usize,
}

/// Distribution summary of one (task, spacing, modality) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucDistribution {
    pub task: Task,
    pub spacing: f64,
    pub modality: Modality,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Repartitions where selection left nothing (scored as AUC 0.5).
    pub empty_selections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingComparison {
    pub task: Task,
    pub spacing: f64,
    /// Two-sided Mann-Whitney P between the 2D and 3D AUC samples.
    pub p_2d_vs_3d: f64,
    pub mean_2d: f64,
    pub mean_3d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub seed: u64,
    pub repartitions: usize,
    pub spacings: Vec<f64>,
    pub distributions: Vec<AucDistribution>,
    pub comparisons: Vec<SpacingComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub spacing: f64,
    pub modality: Modality,
    pub mean_seconds: f64,
}

pub struct AuxOutput {
    pub samples: Vec<AucSample>,
    pub report: AuxReport,
    pub timing: Vec<TimingRow>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn distribution(task: Task, spacing: f64, modality: Modality, samples: &[&AucSample]) -> AucDistribution {
    let mut v: Vec<f64> = samples.iter().map(|s| s.auc).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    AucDistribution {
        task,
        spacing,
        modality,
        n,
        mean,
        sd,
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[n - 1],
        empty_selections: samples.iter().filter(|s| s.n_selected == 0).count(),
    }
}

/// Tables of one spacing, session 1 for everyone and session 2 where present.
struct SpacingData {
    main: BTreeMap<Modality, FeatureTable>,
    repeat: BTreeMap<Modality, FeatureTable>,
}

/// Validation AUC of one (task, modality) in one repartition.
fn cell_auc(
    cfg: &ExperimentConfig,
    data: &SpacingData,
    modality: Modality,
    task: Task,
    training: &[&str],
    icc_ids: &[&str],
    seed: u64,
) -> Result<(f64, usize)> {
    let table = &data.main[&modality];
    let pick = |ids: &[&str]| -> Vec<&FeatureRow> { ids.iter().filter_map(|id| table.row(id)).collect() };
    let train_rows: Vec<&FeatureRow> = pick(training).into_iter().filter(|r| r.label(task).is_some()).collect();
    let valid_rows: Vec<&FeatureRow> = table
        .rows
        .iter()
        .filter(|r| r.label(task).is_some() && !training.contains(&r.patient_id.as_str()))
        .collect();
    let y: Vec<bool> = train_rows.iter().map(|r| r.label(task).unwrap()).collect();
    let yv: Vec<bool> = valid_rows.iter().map(|r| r.label(task).unwrap()).collect();
    if !yv.contains(&true) || !yv.contains(&false) {
        bail!("validation cohort of a repartition holds one class only for {task}");
    }
    let all: Vec<usize> = (0..table.names.len()).collect();
    let cols = columns(&train_rows, &all);
    let (s1, s2) = match data.repeat.get(&modality) {
        Some(rep) if icc_ids.len() >= 3 => {
            let second: Vec<&FeatureRow> = icc_ids.iter().filter_map(|id| rep.row(id)).collect();
            let first = pick(icc_ids);
            (columns(&first, &all), columns(&second, &all))
        }
        _ => (Vec::new(), Vec::new()),
    };
    let input = SelectionInput {
        names: &table.names,
        columns: &cols,
        labels: &y,
        repeat: (!s1.is_empty()).then_some((&s1[..], &s2[..])),
    };
    let sel = run_selection(&input, &cfg.aux_selection(), seed)?;
    if sel.selected.is_empty() {
        return Ok((0.5, 0));
    }
    let idx: Vec<usize> = sel
        .selected
        .iter()
        .map(|n| table.names.iter().position(|x| x == n).unwrap())
        .collect();
    let raw = |rows: &[&FeatureRow]| -> Vec<Vec<f64>> {
        rows.iter().map(|r| idx.iter().map(|&j| r.values[j]).collect()).collect()
    };
    let xt = raw(&train_rows);
    let scaling = zscore_fit(&xt)?;
    let fit = logistic_fit(&scaling.apply(&xt), &y, DEFAULT_L2)?;
    let scores: Vec<f64> = scaling.apply(&raw(&valid_rows)).iter().map(|r| fit.margin(r)).collect();
    Ok((auc(&scores, &yv)?, idx.len()))
}

/// One repartition: seeded by `(seed, r)` only, so every spacing sees the
/// same patients in the same cohorts.
fn repartition(patients: &[Patient], cfg: &ExperimentConfig, r: usize) -> (Vec<usize>, Vec<usize>) {
    let rseed = derive_seed(derive_seed(cfg.seed, STREAM_AUX), r as u64);
    let cohorts = split_patients(patients.len(), None, cfg.split_ratio, rseed);
    let training: Vec<usize> = (0..patients.len()).filter(|&i| cohorts[i] == Cohort::Training).collect();
    let mut icc: Vec<usize> = training.iter().copied().filter(|&i| patients[i].mask_s2.is_some()).collect();
    icc.shuffle(&mut stream_rng(rseed, 1));
    icc.truncate(cfg.icc_subjects);
    icc.sort_unstable();
    (training, icc)
}

pub fn run_aux(cfg: &ExperimentConfig) -> Result<AuxOutput> {
    let patients = load_patients(cfg)?;
    let mods = &cfg.aux_modalities;
    let all: Vec<usize> = (0..patients.len()).collect();
    let with_s2: Vec<usize> = all.iter().copied().filter(|&i| patients[i].mask_s2.is_some()).collect();
    let mut data = Vec::new();
    let mut timing = Vec::new();
    for &spacing in &cfg.aux_spacings {
        log::info!("sweep extraction at {spacing} mm");
        let req: Vec<(Modality, f64)> = mods.iter().map(|&m| (m, spacing)).collect();
        let main = extract_tables(&patients, &all, &req, cfg.bin_count, false)?;
        let repeat = extract_tables(&patients, &with_s2, &req, cfg.bin_count, true)?;
        for (&m, t) in &main.timing {
            timing.push(TimingRow {
                spacing,
                modality: m,
                mean_seconds: mean_seconds(t),
            });
        }
        data.push(SpacingData {
            main: main.tables,
            repeat: repeat.tables,
        });
    }

    let cells: Vec<(usize, usize)> = (0..cfg.aux_spacings.len())
        .flat_map(|s| (0..cfg.repartitions).map(move |r| (s, r)))
        .collect();
    log::info!("sweep: {} cells", cells.len());
    let per_cell: Vec<Vec<AucSample>> = cells
        .par_iter()
        .map(|&(s, r)| {
            let (training, icc) = repartition(&patients, cfg, r);
            let ids = |v: &[usize]| v.iter().map(|&i| patients[i].id.as_str()).collect::<Vec<_>>();
            let (tr_ids, icc_ids) = (ids(&training), ids(&icc));
            let mut out = Vec::new();
            for &task in &cfg.tasks {
                // shared by all modalities so they see the same CV folds
                let seed = derive_seed(
                    derive_seed(cfg.seed, STREAM_AUX + 1),
                    ((s * cfg.repartitions + r) * 8 + task.index()) as u64,
                );
                for &m in mods {
                    let (a, n_sel) = cell_auc(cfg, &data[s], m, task, &tr_ids, &icc_ids, seed)
                        .with_context(|| format!("sweep cell spacing {} repartition {r} {task}/{m}", cfg.aux_spacings[s]))?;
                    out.push(AucSample {
                        task,
                        spacing: cfg.aux_spacings[s],
                        modality: m,
                        repartition: r,
                        auc: a,
                        n_selected: n_sel,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<AucSample> = per_cell.into_iter().flatten().collect();
    let order = |s: &AucSample| {
        (
            s.task.index(),
            cfg.aux_spacings.iter().position(|&x| x == s.spacing).unwrap(),
            mods.iter().position(|&m| m == s.modality).unwrap(),
            s.repartition,
        )
    };
    samples.sort_by_key(order);

    let mut distributions = Vec::new();
    let mut comparisons = Vec::new();
    for &task in &cfg.tasks {
        for &spacing in &cfg.aux_spacings {
            let of = |m: Modality| -> Vec<&AucSample> {
                samples
                    .iter()
                    .filter(|s| s.task == task && s.spacing == spacing && s.modality == m)
                    .collect()
            };
            for &m in mods {
                distributions.push(distribution(task, spacing, m, &of(m)));
            }
            if mods.contains(&Modality::M2D) && mods.contains(&Modality::M3D) {
                let a: Vec<f64> = of(Modality::M2D).iter().map(|s| s.auc).collect();
                let b: Vec<f64> = of(Modality::M3D).iter().map(|s| s.auc).collect();
                let u = mann_whitney(&a, &b)?;
                comparisons.push(SpacingComparison {
                    task,
                    spacing,
                    p_2d_vs_3d: u.p,
                    mean_2d: a.iter().sum::<f64>() / a.len() as f64,
                    mean_3d: b.iter().sum::<f64>() / b.len() as f64,
                });
            }
        }
    }
    Ok(AuxOutput {
        report: AuxReport {
            seed: cfg.seed,
            repartitions: cfg.repartitions,
            spacings: cfg.aux_spacings.clone(),
            distributions,
            comparisons,
        },
        samples,
        timing,
    })
}

pub fn cmd_aux(cfg: &ExperimentConfig, out: &Path) -> Result<AuxOutput> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let res = run_aux(cfg)?;
    let mut w = csv::Writer::from_path(out.join(SAMPLES_FILE))?;
    for s in &res.samples {
        w.serialize(s)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(TIMING_FILE))?;
    for t in &res.timing {
        w.serialize(t)?;
    }
    w.flush()?;
    write_json(&out.join(REPORT_FILE), &res.report)?;
    Ok(res)
}
