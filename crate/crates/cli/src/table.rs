//! Feature matrices and their CSV form:
//! `patient_id,modality,label_lnm,label_lvi,label_pt4,cohort,<851 names>`.
//!
//! Values are written with Rust's shortest round-trip formatting, so reading
//! a table back reproduces every bit.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use radiomx_core::features::{catalog, Modality};
use radiomx_core::imgio::{Cohort, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub patient_id: String,
    pub labels: [Option<u8>; 3],
    pub cohort: Cohort,
    pub values: Vec<f64>,
}

impl FeatureRow {
    pub fn label(&self, task: Task) -> Option<bool> {
        self.labels[task.index()].map(|l| l == 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub modality: Modality,
    pub names: Vec<String>,
    /// Sorted by patient id.
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(modality: Modality, mut rows: Vec<FeatureRow>) -> Self {
        rows.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        FeatureTable {
            modality,
            names: catalog(),
            rows,
        }
    }

    pub fn row(&self, id: &str) -> Option<&FeatureRow> {
        self.rows
            .binary_search_by(|r| r.patient_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Rows of `cohort` that carry a label for `task`.
    pub fn labelled(&self, task: Task, cohort: Cohort) -> Vec<&FeatureRow> {
        self.rows
            .iter()
            .filter(|r| r.cohort == cohort && r.label(task).is_some())
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        let mut header = vec!["patient_id".to_string(), "modality".into()];
        header.extend(Task::ALL.iter().map(|t| format!("label_{t}")));
        header.push("cohort".into());
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.patient_id.clone(), self.modality.to_string()];
            rec.extend(r.labels.iter().map(|l| l.map_or(String::new(), |v| v.to_string())));
            rec.push(r.cohort.as_str().to_string());
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let names = catalog();
        let fixed = 3 + Task::ALL.len();
        if header.len() != fixed + names.len() || header[0] != "patient_id" || header[fixed..] != names[..] {
            bail!("{}: header does not match the feature catalog", path.display());
        }
        let mut modality = None;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let m: Modality = rec[1].parse()?;
            if *modality.get_or_insert(m) != m {
                bail!("{}: mixed modalities", path.display());
            }
            let mut labels = [None; 3];
            for (k, l) in labels.iter_mut().enumerate() {
                let s = &rec[2 + k];
                if !s.is_empty() {
                    *l = Some(s.parse::<u8>().with_context(|| format!("label `{s}`"))?);
                }
            }
            let values = rec
                .iter()
                .skip(fixed)
                .map(|s| s.parse::<f64>().map_err(|e| anyhow!("value `{s}`: {e}")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                patient_id: rec[0].to_string(),
                labels,
                cohort: rec[fixed - 1].parse()?,
                values,
            });
        }
        let modality = modality.ok_or_else(|| anyhow!("{}: no rows", path.display()))?;
        Ok(FeatureTable::new(modality, rows))
    }
}

/// Per-patient extraction wall time, kept out of the feature CSV so that
/// repeated runs produce identical feature files.
pub fn write_timing(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["patient_id", "seconds"])?;
    for (id, s) in rows {
        w.write_record([id.clone(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timing(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.records()
        .map(|r| {
            let r = r?;
            Ok((r[0].to_string(), r[1].parse()?))
        })
        .collect()
}
