//! The main experiment: one split, then per (task, modality) selection,
//! model search and evaluation. Each stage reads and writes plain files so
//! the stage commands compose to the same bytes as `run`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use radiomx_core::features::Modality;
use radiomx_core::imgio::{Cohort, Task};
use radiomx_core::learn::{train_model, ModelArtifact};
use radiomx_core::rng::derive_seed;
use radiomx_core::select::{run_selection, SelectionInput, SelectionReport};
use radiomx_core::stats::{bootstrap_auc_ci, roc, RocPoint};

use crate::config::ExperimentConfig;
use crate::data::{assign_cohorts, extract_tables, icc_subset, load_patients, mean_seconds, slice_thickness};
use crate::report::{balance_rows, AucSummary, CellReport, CellStatus, ComparisonReport, SplitSummary};
use crate::table::{read_timing, write_timing, FeatureRow, FeatureTable};

const STREAM_CELLS: u64 = 100;
const SUB_SELECT: u64 = 0;
const SUB_TRAIN: u64 = 1;
const SUB_BOOT_TRAIN: u64 = 2;
const SUB_BOOT_VALID: u64 = 3;

pub fn features_file(m: Modality) -> String {
    format!("features_{m}.csv")
}
pub fn repeat_file(m: Modality) -> String {
    format!("repeat_{m}.csv")
}
pub fn timing_file(m: Modality) -> String {
    format!("timing_{m}.csv")
}
pub fn selection_file(t: Task, m: Modality) -> String {
    format!("selection_{t}_{m}.json")
}
pub fn model_file(t: Task, m: Modality) -> String {
    format!("model_{t}_{m}.json")
}
pub fn roc_file(t: Task, m: Modality) -> String {
    format!("roc_{t}_{m}.csv")
}
pub const SPLIT_FILE: &str = "split.json";
pub const REPORT_FILE: &str = "report.json";

/// Seed of one stage of one task. Modalities share it, so their CV folds
/// and bootstrap draws line up.
pub fn cell_seed(seed: u64, task: Task, sub: u64) -> u64 {
    derive_seed(derive_seed(seed, STREAM_CELLS + task.index() as u64), sub)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Output of the extraction stage.
pub struct Extraction {
    pub tables: BTreeMap<Modality, FeatureTable>,
    /// Second-session features of the ICC subset.
    pub repeats: BTreeMap<Modality, FeatureTable>,
    pub timing: BTreeMap<Modality, Vec<(String, f64)>>,
    pub split: SplitSummary,
}

pub fn extraction_requests(cfg: &ExperimentConfig) -> Vec<(Modality, f64)> {
    cfg.modalities.iter().map(|&m| (m, cfg.spacing.get(m))).collect()
}

pub fn run_extraction(cfg: &ExperimentConfig) -> Result<Extraction> {
    let mut patients = load_patients(cfg)?;
    assign_cohorts(&mut patients, cfg);
    let requests = extraction_requests(cfg);
    let all: Vec<usize> = (0..patients.len()).collect();
    log::info!("extracting {} patients × {} modalities", patients.len(), requests.len());
    let main = extract_tables(&patients, &all, &requests, cfg.bin_count, false)?;
    let subset = icc_subset(&patients, cfg.icc_subjects, cfg.seed);
    log::info!("extracting second-session masks of {} training patients", subset.len());
    let repeat = extract_tables(&patients, &subset, &requests, cfg.bin_count, true)?;

    let training: Vec<bool> = patients.iter().map(|p| p.cohort == Cohort::Training).collect();
    let labels: Vec<[Option<u8>; 3]> = patients.iter().map(|p| p.labels).collect();
    let thickness = patients.iter().map(slice_thickness).collect::<Result<Vec<_>>>()?;
    let split = SplitSummary {
        n_training: training.iter().filter(|&&t| t).count(),
        n_validation: training.iter().filter(|&&t| !t).count(),
        balance: balance_rows(&cfg.tasks, &labels, &training, &thickness),
    };
    Ok(Extraction {
        tables: main.tables,
        repeats: repeat.tables,
        timing: main.timing,
        split,
    })
}

pub fn write_extraction(x: &Extraction, out: &Path) -> Result<()> {
    for (m, t) in &x.tables {
        t.write_csv(&out.join(features_file(*m)))?;
    }
    for (m, t) in &x.repeats {
        t.write_csv(&out.join(repeat_file(*m)))?;
    }
    for (m, t) in &x.timing {
        write_timing(&out.join(timing_file(*m)), t)?;
    }
    write_json(&out.join(SPLIT_FILE), &x.split)
}

pub fn read_extraction(cfg: &ExperimentConfig, dir: &Path) -> Result<Extraction> {
    let mut x = Extraction {
        tables: BTreeMap::new(),
        repeats: BTreeMap::new(),
        timing: BTreeMap::new(),
        split: read_json(&dir.join(SPLIT_FILE))?,
    };
    for &m in &cfg.modalities {
        x.tables.insert(m, FeatureTable::read_csv(&dir.join(features_file(m)))?);
        let rp = dir.join(repeat_file(m));
        // an empty ICC subset leaves a header-only file
        if let Ok(t) = FeatureTable::read_csv(&rp) {
            x.repeats.insert(m, t);
        }
        x.timing.insert(m, read_timing(&dir.join(timing_file(m)))?);
    }
    Ok(x)
}

/// Column-major view of `rows` restricted to feature indices `idx`.
pub fn columns(rows: &[&FeatureRow], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&j| rows.iter().map(|r| r.values[j]).collect()).collect()
}

fn labels_of(rows: &[&FeatureRow], task: Task) -> Vec<bool> {
    rows.iter().map(|r| r.label(task).unwrap()).collect()
}

/// Selection on the training cohort of one cell.
pub fn select_cell(cfg: &ExperimentConfig, table: &FeatureTable, repeat: Option<&FeatureTable>, task: Task) -> Result<SelectionReport> {
    let rows = table.labelled(task, Cohort::Training);
    let y = labels_of(&rows, task);
    let all: Vec<usize> = (0..table.names.len()).collect();
    let cols = columns(&rows, &all);
    let (s1, s2) = match repeat {
        Some(rep) if rep.rows.len() >= 3 => {
            let first: Vec<&FeatureRow> = rep
                .rows
                .iter()
                .map(|r| table.row(&r.patient_id).context("repeat patient missing from the main table"))
                .collect::<Result<_>>()?;
            let second: Vec<&FeatureRow> = rep.rows.iter().collect();
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
    let seed = cell_seed(cfg.seed, task, SUB_SELECT);
    run_selection(&input, &cfg.selection, seed).with_context(|| format!("selection for {task}/{}", table.modality))
}

/// Stored result of the training stage for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellModel {
    pub task: Task,
    pub modality: Modality,
    pub empty_stage: Option<String>,
    /// None when selection left nothing to model.
    pub artifact: Option<ModelArtifact>,
}

fn feature_indices(table: &FeatureTable, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| table.names.iter().position(|x| x == n).with_context(|| format!("unknown descriptor {n}")))
        .collect()
}

pub fn train_cell(cfg: &ExperimentConfig, table: &FeatureTable, sel: &SelectionReport, task: Task) -> Result<CellModel> {
    let modality = table.modality;
    if sel.selected.is_empty() {
        log::warn!("{task}/{modality}: no descriptor survived selection (stage {:?})", sel.empty_stage);
        return Ok(CellModel {
            task,
            modality,
            empty_stage: sel.empty_stage.clone().or(Some("lasso".into())),
            artifact: None,
        });
    }
    let rows = table.labelled(task, Cohort::Training);
    let idx = feature_indices(table, &sel.selected)?;
    let raw: Vec<Vec<f64>> = rows.iter().map(|r| idx.iter().map(|&j| r.values[j]).collect()).collect();
    let y = labels_of(&rows, task);
    let seed = cell_seed(cfg.seed, task, SUB_TRAIN);
    let artifact = train_model(&sel.selected, &raw, &y, cfg.selection.cv_folds, seed)
        .with_context(|| format!("training {task}/{modality}"))?;
    Ok(CellModel {
        task,
        modality,
        empty_stage: None,
        artifact: Some(artifact),
    })
}

/// Model scores for `rows`; a cell without a model gives every patient the
/// same score, which is an AUC of exactly 0.5.
pub fn score_rows(table: &FeatureTable, model: &CellModel, rows: &[&FeatureRow]) -> Result<Vec<f64>> {
    match &model.artifact {
        None => Ok(vec![0.5; rows.len()]),
        Some(a) => {
            let idx = feature_indices(table, &a.descriptors)?;
            Ok(rows
                .iter()
                .map(|r| a.score_raw(&idx.iter().map(|&j| r.values[j]).collect::<Vec<_>>()))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub cohort: Cohort,
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

fn summarize(scores: &[f64], y: &[bool], resamples: usize, seed: u64) -> Result<(AucSummary, Vec<RocPoint>)> {
    let r = roc(scores, y)?;
    let ci = bootstrap_auc_ci(scores, y, resamples, seed)?;
    Ok((
        AucSummary {
            n: y.len(),
            n_positive: y.iter().filter(|&&l| l).count(),
            auc: r.auc,
            ci_lo: ci.lo.min(r.auc),
            ci_hi: ci.hi.max(r.auc),
        },
        r.points,
    ))
}

pub fn eval_cell(
    cfg: &ExperimentConfig,
    table: &FeatureTable,
    model: &CellModel,
    mean_extraction_seconds: f64,
) -> Result<(CellReport, Vec<RocRow>)> {
    let (task, modality) = (model.task, model.modality);
    let mut out = Vec::new();
    let mut roc_rows = Vec::new();
    for (cohort, sub) in [(Cohort::Training, SUB_BOOT_TRAIN), (Cohort::Validation, SUB_BOOT_VALID)] {
        let rows = table.labelled(task, cohort);
        let y = labels_of(&rows, task);
        let scores = score_rows(table, model, &rows)?;
        let (s, pts) = summarize(&scores, &y, cfg.bootstrap_resamples, cell_seed(cfg.seed, task, sub))
            .with_context(|| format!("evaluating {task}/{modality} on the {} cohort", cohort.as_str()))?;
        out.push(s);
        roc_rows.extend(pts.into_iter().map(|p| RocRow {
            cohort,
            fpr: p.fpr,
            tpr: p.tpr,
            threshold: p.threshold,
        }));
    }
    let a = model.artifact.as_ref();
    let report = CellReport {
        task,
        modality,
        status: if a.is_some() { CellStatus::Ok } else { CellStatus::EmptySelection },
        empty_stage: model.empty_stage.clone(),
        selected: a.map(|a| a.descriptors.clone()).unwrap_or_default(),
        model_kind: a.map(|a| a.kind),
        hyperparameters: a.map(|a| a.chosen),
        cv_auc: a.map(|a| a.cv_auc),
        training: out[0],
        validation: out[1],
        mean_extraction_seconds,
    };
    Ok((report, roc_rows))
}

fn write_selection(out: &Path, task: Task, m: Modality, sel: &SelectionReport) -> Result<()> {
    write_json(&out.join(selection_file(task, m)), sel)?;
    let csv_path = out.join(selection_file(task, m).replace(".json", ".csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["stage", "descriptor", "statistic", "kept"])?;
    for (stage, name, stat, kept) in sel.flat_rows() {
        w.write_record([stage, name, stat.to_string(), kept.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_roc(path: &Path, rows: &[RocRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cells(cfg: &ExperimentConfig) -> Vec<(Task, Modality)> {
    cfg.tasks
        .iter()
        .flat_map(|&t| cfg.modalities.iter().map(move |&m| (t, m)))
        .collect()
}

fn table<'a>(x: &'a Extraction, m: Modality) -> Result<&'a FeatureTable> {
    x.tables.get(&m).with_context(|| format!("no feature table for {m}"))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn cmd_extract(cfg: &ExperimentConfig, out: &Path) -> Result<Extraction> {
    prepare_out(out)?;
    let x = run_extraction(cfg)?;
    write_extraction(&x, out)?;
    Ok(x)
}

pub fn cmd_select(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let x = read_extraction(cfg, dir)?;
    for (task, m) in cells(cfg) {
        let sel = select_cell(cfg, table(&x, m)?, x.repeats.get(&m), task)?;
        write_selection(dir, task, m, &sel)?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let x = read_extraction(cfg, dir)?;
    for (task, m) in cells(cfg) {
        let sel: SelectionReport = read_json(&dir.join(selection_file(task, m)))?;
        let model = train_cell(cfg, table(&x, m)?, &sel, task)?;
        write_json(&dir.join(model_file(task, m)), &model)?;
    }
    Ok(())
}

fn report_from(cfg: &ExperimentConfig, x: &Extraction, cells: Vec<CellReport>) -> ComparisonReport {
    ComparisonReport {
        seed: cfg.seed,
        permuted_labels: cfg.permute_labels,
        split: x.split.clone(),
        cells,
    }
}

pub fn cmd_eval(cfg: &ExperimentConfig, dir: &Path) -> Result<ComparisonReport> {
    let x = read_extraction(cfg, dir)?;
    let mut reports = Vec::new();
    for (task, m) in cells(cfg) {
        let model: CellModel = read_json(&dir.join(model_file(task, m)))?;
        if model.task != task || model.modality != m {
            bail!("{} holds a model for {}/{}", model_file(task, m), model.task, model.modality);
        }
        let (r, roc_rows) = eval_cell(cfg, table(&x, m)?, &model, mean_seconds(&x.timing[&m]))?;
        write_roc(&dir.join(roc_file(task, m)), &roc_rows)?;
        reports.push(r);
    }
    let report = report_from(cfg, &x, reports);
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// All stages in one process, writing the same files as the stage commands.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<ComparisonReport> {
    let x = cmd_extract(cfg, out)?;
    let mut reports = Vec::new();
    for (task, m) in cells(cfg) {
        let t = table(&x, m)?;
        log::info!("cell {task}/{m}");
        let sel = select_cell(cfg, t, x.repeats.get(&m), task)?;
        write_selection(out, task, m, &sel)?;
        let model = train_cell(cfg, t, &sel, task)?;
        write_json(&out.join(model_file(task, m)), &model)?;
        let (r, roc_rows) = eval_cell(cfg, t, &model, mean_seconds(&x.timing[&m]))?;
        write_roc(&out.join(roc_file(task, m)), &roc_rows)?;
        reports.push(r);
    }
    let report = report_from(cfg, &x, reports);
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Files whose bytes must agree between a staged and a monolithic run.
pub fn deterministic_outputs(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let mut v = vec![PathBuf::from(SPLIT_FILE)];
    for &m in &cfg.modalities {
        v.push(features_file(m).into());
        v.push(repeat_file(m).into());
    }
    for (t, m) in cells(cfg) {
        v.push(selection_file(t, m).into());
        v.push(selection_file(t, m).replace(".json", ".csv").into());
        v.push(model_file(t, m).into());
        v.push(roc_file(t, m).into());
    }
    v
}
