use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary prediction tasks carried in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Lnm,
    Lvi,
    Pt4,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Lnm, Task::Lvi, Task::Pt4];

    pub fn index(self) -> usize {
        match self {
            Task::Lnm => 0,
            Task::Lvi => 1,
            Task::Pt4 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Lnm => "lnm",
            Task::Lvi => "lvi",
            Task::Pt4 => "pt4",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lnm" => Ok(Task::Lnm),
            "lvi" => Ok(Task::Lvi),
            "pt4" | "pt" => Ok(Task::Pt4),
            other => Err(Error::InvalidInput(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Training,
    Validation,
    #[default]
    Unassigned,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Training => "training",
            Cohort::Validation => "validation",
            Cohort::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Cohort {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "training" | "train" => Ok(Cohort::Training),
            "validation" | "valid" => Ok(Cohort::Validation),
            "" | "unassigned" => Ok(Cohort::Unassigned),
            other => Err(Error::Manifest(format!("unknown cohort `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub patient_id: String,
    pub volume: PathBuf,
    pub mask: PathBuf,
    pub labels: [Option<u8>; 3],
    pub cohort: Cohort,
    pub session: u32,
}

impl ManifestRow {
    pub fn label(&self, task: Task) -> Option<u8> {
        self.labels[task.index()]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    patient_id: String,
    volume: String,
    mask: String,
    label_lnm: Option<u8>,
    label_lvi: Option<u8>,
    label_pt4: Option<u8>,
    cohort: String,
    session: u32,
}

/// Cohort table; relative paths are resolved against `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl CohortManifest {
    pub fn new(root: impl Into<PathBuf>, rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert((r.patient_id.clone(), r.session)) {
                return Err(Error::Manifest(format!(
                    "duplicate (patient_id, session) = ({}, {})",
                    r.patient_id, r.session
                )));
            }
            for l in r.labels.iter().flatten() {
                if *l > 1 {
                    return Err(Error::Manifest(format!(
                        "label {l} for {} is not binary",
                        r.patient_id
                    )));
                }
            }
        }
        Ok(CohortManifest {
            root: root.into(),
            rows,
        })
    }

    /// Load `manifest.csv`; every referenced path must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let r: CsvRow = rec?;
            rows.push(ManifestRow {
                patient_id: r.patient_id,
                volume: PathBuf::from(r.volume),
                mask: PathBuf::from(r.mask),
                labels: [r.label_lnm, r.label_lvi, r.label_pt4],
                cohort: r.cohort.parse()?,
                session: r.session,
            });
        }
        let m = CohortManifest::new(root, rows)?;
        for r in &m.rows {
            for p in [&r.volume, &r.mask] {
                let full = m.resolve(p);
                if !full.exists() {
                    return Err(Error::Manifest(format!(
                        "{}: path {} does not exist",
                        r.patient_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(CsvRow {
                patient_id: r.patient_id.clone(),
                volume: r.volume.to_string_lossy().into_owned(),
                mask: r.mask.to_string_lossy().into_owned(),
                label_lnm: r.labels[0],
                label_lvi: r.labels[1],
                label_pt4: r.labels[2],
                cohort: r.cohort.as_str().into(),
                session: r.session,
            })?;
        }
        w.flush().map_err(|e| Error::io("manifest", e))?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Rows for one session, sorted by patient id.
    pub fn session(&self, session: u32) -> Vec<&ManifestRow> {
        let mut v: Vec<&ManifestRow> = self.rows.iter().filter(|r| r.session == session).collect();
        v.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        v
    }
}
