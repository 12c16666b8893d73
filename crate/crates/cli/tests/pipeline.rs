mod common;

use std::sync::OnceLock;

use tempfile::TempDir;

use radiomx::data::load_patients;
use radiomx::pipeline::{
    cmd_eval, cmd_extract, cmd_run, cmd_select, cmd_train, deterministic_outputs, features_file, read_extraction,
    select_cell, train_cell, REPORT_FILE,
};
use radiomx::report::CellStatus;
use radiomx::table::FeatureTable;
use radiomx::ComparisonReport;
use radiomx_core::features::Modality;
use radiomx_core::imgio::{Cohort, Task};

use common::*;

/// One 30-patient cohort and a monolithic run over it, shared by the tests.
struct Fixture {
    _dir: TempDir,
    cohort: std::path::PathBuf,
    run: std::path::PathBuf,
    report: ComparisonReport,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let cohort = make_cohort(&dir.path().join("cohort"), &small_spec(30, 0.9, 77));
        let run = dir.path().join("run");
        let report = cmd_run(&config_for(&cohort, 5), &run).unwrap();
        Fixture {
            _dir: dir,
            cohort,
            run,
            report,
        }
    })
}

#[test]
fn staged_commands_equal_monolithic_run() {
    let f = fixture();
    let cfg = config_for(&f.cohort, 5);
    let staged = TempDir::new().unwrap();
    cmd_extract(&cfg, staged.path()).unwrap();
    cmd_select(&cfg, staged.path()).unwrap();
    cmd_train(&cfg, staged.path()).unwrap();
    let report = cmd_eval(&cfg, staged.path()).unwrap();
    let diff = same_bytes(&f.run, staged.path(), &deterministic_outputs(&cfg));
    assert!(diff.is_empty(), "differing files: {diff:?}");
    assert_eq!(report.without_timing(), f.report.without_timing());
}

#[test]
fn eval_reproduces_stored_report() {
    let f = fixture();
    let cfg = config_for(&f.cohort, 5);
    let copy = TempDir::new().unwrap();
    for e in std::fs::read_dir(&f.run).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), copy.path().join(e.file_name())).unwrap();
    }
    let again = cmd_eval(&cfg, copy.path()).unwrap();
    assert_eq!(again, f.report);
    let stored: ComparisonReport =
        serde_json::from_str(&std::fs::read_to_string(f.run.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(stored, f.report);
}

#[test]
fn extract_writes_one_row_per_patient_and_modality() {
    let f = fixture();
    for m in Modality::ALL {
        let t = FeatureTable::read_csv(&f.run.join(features_file(m))).unwrap();
        assert_eq!(t.rows.len(), 30);
        assert_eq!(t.modality, m);
        assert!(t.rows.iter().all(|r| r.values.iter().all(|v| v.is_finite())));
    }
}

#[test]
fn report_structure() {
    let r = &fixture().report;
    assert_eq!(r.cells.len(), Task::ALL.len() * Modality::ALL.len());
    assert_eq!(r.split.n_training + r.split.n_validation, 30);
    assert_eq!(r.split.n_training, 21);
    for c in &r.cells {
        for s in [c.training, c.validation] {
            assert!(s.ci_lo <= s.auc && s.auc <= s.ci_hi, "{s:?}");
        }
        assert_eq!(c.status == CellStatus::Ok, c.model_kind.is_some());
        assert!(c.mean_extraction_seconds > 0.0);
    }
    assert!(r.split.balance.iter().all(|b| b.p > 0.0 && b.p <= 1.0));
    assert_eq!(r.split.balance.len(), 4);
}

#[test]
fn validation_rows_never_reach_selection_or_fit() {
    let f = fixture();
    let cfg = config_for(&f.cohort, 5);
    let x = read_extraction(&cfg, &f.run).unwrap();
    let task = Task::Lvi;
    let m = Modality::M3D;
    let base = &x.tables[&m];
    let sel = select_cell(&cfg, base, x.repeats.get(&m), task).unwrap();
    let model = train_cell(&cfg, base, &sel, task).unwrap();

    let mut mutated = base.clone();
    for r in mutated.rows.iter_mut().filter(|r| r.cohort == Cohort::Validation) {
        for (j, v) in r.values.iter_mut().enumerate() {
            *v = *v * 3.0 + j as f64;
        }
        r.labels = r.labels.map(|l| l.map(|l| 1 - l));
    }
    let sel2 = select_cell(&cfg, &mutated, x.repeats.get(&m), task).unwrap();
    let model2 = train_cell(&cfg, &mutated, &sel2, task).unwrap();
    assert_eq!(sel, sel2);
    assert_eq!(model, model2);
}

#[test]
fn empty_selection_is_reported_and_run_continues() {
    let f = fixture();
    let mut cfg = config_for(&f.cohort, 5);
    cfg.modalities = vec![Modality::M2D];
    cfg.selection.p_threshold = 1e-300;
    let out = TempDir::new().unwrap();
    let r = cmd_run(&cfg, out.path()).unwrap();
    assert_eq!(r.cells.len(), 3);
    for c in &r.cells {
        assert_eq!(c.status, CellStatus::EmptySelection);
        assert_eq!(c.empty_stage.as_deref(), Some("utest"));
        assert_eq!(c.validation.auc, 0.5);
        assert!(c.selected.is_empty());
    }
}

#[test]
fn missing_labels_are_an_error() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(f.cohort.join("manifest.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let col = header.split(',').position(|h| h == "label_pt4").unwrap();
    let mut out = vec![header.to_string()];
    for l in lines {
        let mut fields: Vec<String> = l.split(',').map(|s| s.to_string()).collect();
        fields[col].clear();
        // keep image paths pointing at the original cohort
        for fld in fields.iter_mut().filter(|s| s.ends_with(".nrrd")) {
            *fld = f.cohort.join(&*fld).display().to_string();
        }
        out.push(fields.join(","));
    }
    std::fs::write(dir.path().join("manifest.csv"), out.join("\n") + "\n").unwrap();
    let mut cfg = config_for(dir.path(), 5);
    assert!(load_patients(&cfg).is_err());
    cfg.tasks = vec![Task::Lnm];
    assert_eq!(load_patients(&cfg).unwrap().len(), 30);
}

#[test]
fn permuted_labels_change_labels_but_not_features() {
    let f = fixture();
    let mut cfg = config_for(&f.cohort, 5);
    let a = load_patients(&cfg).unwrap();
    cfg.permute_labels = true;
    let b = load_patients(&cfg).unwrap();
    assert_ne!(
        a.iter().map(|p| p.labels).collect::<Vec<_>>(),
        b.iter().map(|p| p.labels).collect::<Vec<_>>()
    );
    assert!(a.iter().zip(&b).all(|(p, q)| p.id == q.id && p.volume == q.volume));
}
