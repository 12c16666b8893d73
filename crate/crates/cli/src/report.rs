//! Report types and the cohort balance tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use radiomx_core::features::Modality;
use radiomx_core::imgio::Task;
use radiomx_core::learn::{GridPoint, ModelKind};
use radiomx_core::stats::mann_whitney;

/// Point AUC with its percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub n: usize,
    pub n_positive: usize,
    pub auc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl std::fmt::Display for AucSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} [{:.3}, {:.3}]", self.auc, self.ci_lo, self.ci_hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// No descriptor survived selection; the cell scores every patient alike.
    EmptySelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: Task,
    pub modality: Modality,
    pub status: CellStatus,
    pub empty_stage: Option<String>,
    pub selected: Vec<String>,
    pub model_kind: Option<ModelKind>,
    pub hyperparameters: Option<GridPoint>,
    pub cv_auc: Option<f64>,
    pub training: AucSummary,
    pub validation: AucSummary,
    pub mean_extraction_seconds: f64,
}

/// One Table I style comparison between the two cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub variable: String,
    /// `chi2` or `mann_whitney`.
    pub test: String,
    pub statistic: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_training: usize,
    pub n_validation: usize,
    pub balance: Vec<BalanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub permuted_labels: bool,
    pub split: SplitSummary,
    pub cells: Vec<CellReport>,
}

impl ComparisonReport {
    pub fn cell(&self, task: Task, modality: Modality) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.task == task && c.modality == modality)
    }

    /// Copy with every timing field zeroed, for run-to-run comparisons.
    pub fn without_timing(&self) -> ComparisonReport {
        let mut r = self.clone();
        for c in &mut r.cells {
            c.mean_extraction_seconds = 0.0;
        }
        r
    }
}

/// Pearson χ² (1 df, no continuity correction) for a 2×2 table
/// `[[a, b], [c, d]]`. None when a margin is empty.
pub fn chi2_2x2(a: usize, b: usize, c: usize, d: usize) -> Option<(f64, f64)> {
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let n = a + b + c + d;
    let margins = [(a + b), (c + d), (a + c), (b + d)];
    if margins.iter().any(|&m| m == 0.0) {
        return None;
    }
    let stat = n * (a * d - b * c).powi(2) / (margins.iter().product::<f64>());
    let p = ChiSquared::new(1.0).ok()?.sf(stat).clamp(f64::MIN_POSITIVE, 1.0);
    Some((stat, p))
}

/// Label balance per task plus a U test on slice thickness.
/// `labels[i]`, `training[i]` and `thickness[i]` describe patient `i`.
pub fn balance_rows(tasks: &[Task], labels: &[[Option<u8>; 3]], training: &[bool], thickness: &[f64]) -> Vec<BalanceRow> {
    let mut out = Vec::new();
    for &task in tasks {
        let mut t = [[0usize; 2]; 2];
        for (l, &tr) in labels.iter().zip(training) {
            if let Some(l) = l[task.index()] {
                t[usize::from(!tr)][l as usize] += 1;
            }
        }
        if let Some((stat, p)) = chi2_2x2(t[0][0], t[0][1], t[1][0], t[1][1]) {
            out.push(BalanceRow {
                variable: format!("label_{task}"),
                test: "chi2".into(),
                statistic: stat,
                p,
            });
        }
    }
    let tr: Vec<f64> = thickness.iter().zip(training).filter(|(_, &t)| t).map(|(&x, _)| x).collect();
    let va: Vec<f64> = thickness.iter().zip(training).filter(|(_, &t)| !t).map(|(&x, _)| x).collect();
    if let Ok(u) = mann_whitney(&tr, &va) {
        out.push(BalanceRow {
            variable: "slice_thickness".into(),
            test: "mann_whitney".into(),
            statistic: u.u,
            p: u.p,
        });
    }
    out
}
