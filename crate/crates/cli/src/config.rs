//! Experiment configuration, read from JSON with every field optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use radiomx_core::features::Modality;
use radiomx_core::imgio::Task;
use radiomx_core::select::SelectionConfig;

/// Isotropic resampling spacing per modality, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacings {
    #[serde(rename = "2D")]
    pub m2d: f64,
    #[serde(rename = "2.5D")]
    pub m2_5d: f64,
    #[serde(rename = "3D")]
    pub m3d: f64,
}

impl Spacings {
    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::M2D => self.m2d,
            Modality::M2_5D => self.m2_5d,
            Modality::M3D => self.m3d,
        }
    }
}

impl Default for Spacings {
    fn default() -> Self {
        Spacings {
            m2d: 1.25,
            m2_5d: 1.25,
            m3d: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory holding `manifest.csv`.
    pub cohort: PathBuf,
    pub tasks: Vec<Task>,
    pub modalities: Vec<Modality>,
    /// Training fraction of the patient-level split.
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Stratify the split by the first task's label.
    pub stratify_split: bool,
    pub spacing: Spacings,
    pub aux_spacings: Vec<f64>,
    pub aux_modalities: Vec<Modality>,
    pub repartitions: usize,
    /// Final-feature cap in the auxiliary sweep.
    pub max_final_features: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    /// Re-segmented training patients used for the ICC stage.
    pub icc_subjects: usize,
    pub bin_count: usize,
    pub selection: SelectionConfig,
    /// Shuffle every task's labels across patients (null experiment).
    pub permute_labels: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: PathBuf::from("cohort_out"),
            tasks: Task::ALL.to_vec(),
            modalities: Modality::ALL.to_vec(),
            split_ratio: 0.7,
            split_seed: 1,
            stratify_split: false,
            spacing: Spacings::default(),
            aux_spacings: vec![1.25, 2.0, 2.5, 3.0, 5.0],
            aux_modalities: Modality::ALL.to_vec(),
            repartitions: 50,
            max_final_features: 4,
            seed: 2024,
            bootstrap_resamples: 1000,
            icc_subjects: 60,
            bin_count: 32,
            selection: SelectionConfig::default(),
            permute_labels: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            bail!("split_ratio must lie in (0, 1), got {}", self.split_ratio);
        }
        if self.tasks.is_empty() || self.modalities.is_empty() {
            bail!("tasks and modalities must be nonempty");
        }
        if self.aux_spacings.is_empty() || self.aux_spacings.iter().any(|&s| !(s > 0.0)) {
            bail!("aux_spacings must be a nonempty list of positive values");
        }
        for m in Modality::ALL {
            if !(self.spacing.get(m) > 0.0) {
                bail!("resampling spacing for {m} must be positive");
            }
        }
        if self.repartitions < 2 {
            bail!("repartitions must be at least 2, got {}", self.repartitions);
        }
        if self.max_final_features == 0 {
            bail!("max_final_features must be at least 1");
        }
        if self.bootstrap_resamples < 100 {
            bail!("bootstrap_resamples must be at least 100");
        }
        if self.bin_count == 0 {
            bail!("bin_count must be positive");
        }
        if self.icc_subjects < 3 {
            bail!("icc_subjects must be at least 3");
        }
        self.selection.validate()?;
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.cohort.join("manifest.csv")
    }

    /// Selection settings for the sweep, with the final-feature cap.
    pub fn aux_selection(&self) -> SelectionConfig {
        SelectionConfig {
            max_final_features: Some(self.max_final_features),
            ..self.selection.clone()
        }
    }
}
