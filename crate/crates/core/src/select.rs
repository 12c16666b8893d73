//! Five-stage feature selection: ICC reproducibility, U-test relevance,
//! greedy decorrelation, mRMR ranking and a LASSO fit with a CV-chosen λ.
//!
//! Feature data is column-major: `columns[j][i]` is feature `j` of patient `i`.
//! Every statistic is fitted on the training columns passed in; nothing here
//! sees validation data.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::stratified_folds;
use crate::stats::{auc, icc_2_1, mann_whitney, midranks, mutual_information, mutual_information_discrete, pearson};

/// Bins used to discretize continuous features for mutual information.
pub const MRMR_BINS: usize = 4;
/// Objective values closer than this count as tied.
const TIE_EPS: f64 = 1e-12;
const LASSO_TOL: f64 = 1e-6;
const LASSO_MAX_SWEEPS: usize = 10_000;
/// Stationarity slack at which coordinate descent may stop.
const LASSO_KKT_STOP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub icc_threshold: f64,
    pub p_threshold: f64,
    pub corr_threshold: f64,
    pub mrmr_k: usize,
    /// λ grid as fractions of λ_max on the training data, largest first.
    pub lambda_ratios: Vec<f64>,
    pub max_final_features: Option<usize>,
    pub cv_folds: usize,
}

/// `n` log-spaced ratios from 1 down to `min_ratio`.
pub fn log_grid(n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| min_ratio.powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            icc_threshold: 0.75,
            p_threshold: 0.05,
            corr_threshold: 0.95,
            mrmr_k: 30,
            lambda_ratios: log_grid(30, 1e-3),
            max_final_features: None,
            cv_folds: 5,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("icc_threshold", self.icc_threshold),
            ("p_threshold", self.p_threshold),
            ("corr_threshold", self.corr_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.mrmr_k == 0 {
            return Err(Error::InvalidInput("mrmr_k must be at least 1".into()));
        }
        if self.lambda_ratios.is_empty() || self.lambda_ratios.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("lambda grid must be nonempty and positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput("cv_folds must be at least 2".into()));
        }
        if self.max_final_features == Some(0) {
            return Err(Error::InvalidInput("max_final_features must be at least 1".into()));
        }
        Ok(())
    }
}

/// One keep/drop decision and the statistic behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub statistic: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrmrStep {
    pub name: String,
    pub objective: f64,
    pub relevance: f64,
    pub redundancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub max_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoReport {
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    pub cv_auc: Vec<f64>,
    /// λ with the best CV AUC, before any cap.
    pub best_lambda: f64,
    pub chosen_lambda: f64,
    pub entries: Vec<StageEntry>,
    pub converged: bool,
    pub max_change: f64,
    pub kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub icc: Vec<StageEntry>,
    pub icc_skipped: bool,
    pub utest: Vec<StageEntry>,
    pub decorrelate: Vec<StageEntry>,
    pub mrmr: Vec<MrmrStep>,
    pub mrmr_truncated: bool,
    pub lasso: Option<LassoReport>,
    /// Surviving descriptors with their LASSO coefficients.
    pub selected: Vec<String>,
    pub coefficients: Vec<f64>,
    /// First stage that left nothing, if any.
    pub empty_stage: Option<String>,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Survivors after each stage, in stage order.
    pub fn stage_survivors(&self) -> Vec<(&'static str, Vec<String>)> {
        let kept = |v: &[StageEntry]| v.iter().filter(|e| e.kept).map(|e| e.name.clone()).collect::<Vec<_>>();
        vec![
            ("icc", kept(&self.icc)),
            ("utest", kept(&self.utest)),
            ("decorrelate", kept(&self.decorrelate)),
            ("mrmr", self.mrmr.iter().map(|s| s.name.clone()).collect()),
            ("lasso", self.selected.clone()),
        ]
    }

    /// Flat `(stage, descriptor, statistic, kept)` rows.
    pub fn flat_rows(&self) -> Vec<(String, String, f64, bool)> {
        let mut rows = Vec::new();
        let mut push = |stage: &str, v: &[StageEntry]| {
            rows.extend(v.iter().map(|e| (stage.to_string(), e.name.clone(), e.statistic, e.kept)));
        };
        push("icc", &self.icc);
        push("utest", &self.utest);
        push("decorrelate", &self.decorrelate);
        if let Some(l) = &self.lasso {
            push("lasso", &l.entries);
        }
        let mut rows = rows;
        for s in &self.mrmr {
            rows.push(("mrmr".into(), s.name.clone(), s.objective, true));
        }
        rows
    }
}

/// Keep features with ICC(2,1) strictly above the threshold.
pub fn stage_icc(names: &[String], session1: &[Vec<f64>], session2: &[Vec<f64>], threshold: f64) -> Result<Vec<StageEntry>> {
    names
        .iter()
        .zip(session1.iter().zip(session2))
        .map(|(n, (a, b))| {
            let icc = icc_2_1(a, b)?;
            Ok(StageEntry {
                name: n.clone(),
                statistic: icc,
                kept: icc > threshold,
            })
        })
        .collect()
}

/// Keep features whose two-sided U-test P is at most the threshold.
pub fn stage_utest(names: &[String], columns: &[Vec<f64>], labels: &[bool], threshold: f64) -> Result<Vec<StageEntry>> {
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(Error::SingleClass);
    }
    names
        .iter()
        .zip(columns)
        .map(|(n, col)| {
            let (pos, neg): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
                col.iter().copied().zip(labels.iter().copied()).partition(|(_, l)| *l);
            let pos: Vec<f64> = pos.into_iter().map(|(v, _)| v).collect();
            let neg: Vec<f64> = neg.into_iter().map(|(v, _)| v).collect();
            let p = mann_whitney(&pos, &neg)?.p;
            Ok(StageEntry {
                name: n.clone(),
                statistic: p,
                kept: p <= threshold,
            })
        })
        .collect()
}

/// Visit features by ascending P (then name) and keep each one whose largest
/// |r| against the features kept so far is within the threshold. The entry
/// statistic is that largest |r| (0 for the first).
pub fn stage_decorrelate(names: &[String], columns: &[Vec<f64>], pvalues: &[f64], threshold: f64) -> Result<Vec<StageEntry>> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        pvalues[a]
            .partial_cmp(&pvalues[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| names[a].cmp(&names[b]))
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(order.len());
    for j in order {
        let mut worst = 0.0f64;
        for &k in &kept {
            worst = worst.max(pearson(&columns[j], &columns[k])?.abs());
        }
        let keep = worst <= threshold;
        if keep {
            kept.push(j);
        }
        out.push(StageEntry {
            name: names[j].clone(),
            statistic: worst,
            kept: keep,
        });
    }
    Ok(out)
}

/// Equal-frequency bin index per value; tied values share a bin.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len() as f64;
    midranks(x)
        .into_iter()
        .map(|r| (((r - 0.5) * bins as f64 / n).floor() as usize).min(bins - 1))
        .collect()
}

/// Greedy mRMR: each step maximizes `I(x; y) - mean_{s in S} I(x; s)`.
/// Ties (within 1e-12) go to the lower redundancy, then to the name.
pub fn mrmr(names: &[String], columns: &[Vec<f64>], labels: &[bool], k: usize) -> Vec<MrmrStep> {
    let binned: Vec<Vec<usize>> = columns.iter().map(|c| equal_frequency_bins(c, MRMR_BINS)).collect();
    let relevance: Vec<f64> = binned.iter().map(|b| mutual_information(b, labels)).collect();
    let mut redundancy_sum = vec![0.0; names.len()];
    let mut chosen = vec![false; names.len()];
    let mut trace: Vec<MrmrStep> = Vec::new();
    for step in 0..k.min(names.len()) {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..names.len()).filter(|&j| !chosen[j]) {
            let red = if step == 0 { 0.0 } else { redundancy_sum[j] / step as f64 };
            let obj = relevance[j] - red;
            let better = match best {
                None => true,
                Some((b, bo, br)) => {
                    if (obj - bo).abs() > TIE_EPS {
                        obj > bo
                    } else if (red - br).abs() > TIE_EPS {
                        red < br
                    } else {
                        names[j] < names[b]
                    }
                }
            };
            if better {
                best = Some((j, obj, red));
            }
        }
        let (j, obj, red) = best.expect("candidates remain");
        chosen[j] = true;
        trace.push(MrmrStep {
            name: names[j].clone(),
            objective: obj,
            relevance: relevance[j],
            redundancy: red,
        });
        for c in (0..names.len()).filter(|&c| !chosen[c]) {
            redundancy_sum[c] += mutual_information_discrete(&binned[c], &binned[j]);
        }
    }
    trace
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Centered copy of a column and its mean.
fn center(x: &[f64]) -> (Vec<f64>, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| v - m).collect(), m)
}

/// `max_j |2 x_jᵀ (y - ȳ)|` on centered columns: the smallest λ with an
/// all-zero solution.
pub fn lambda_max(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let (yc, _) = center(y);
    columns
        .iter()
        .map(|c| {
            let (xc, _) = center(c);
            (2.0 * xc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>()).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the LASSO optimality conditions at `fit`.
pub fn kkt_violation(columns: &[Vec<f64>], y: &[f64], lambda: f64, fit: &LassoFit) -> f64 {
    let n = y.len();
    let mut r: Vec<f64> = (0..n).map(|i| y[i] - fit.intercept).collect();
    for (c, &w) in columns.iter().zip(&fit.weights) {
        for i in 0..n {
            r[i] -= c[i] * w;
        }
    }
    let mut worst = (r.iter().sum::<f64>()).abs();
    for (c, &w) in columns.iter().zip(&fit.weights) {
        let g = 2.0 * c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let v = if w != 0.0 { (g - lambda * w.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Minimize `Σ (y - Xw - b)² + λ‖w‖₁` by cyclic coordinate descent, with an
/// unpenalized intercept. Iterates until the largest coefficient change is
/// below 1e-6 and the optimality conditions hold, or 10 000 sweeps pass.
///
/// Updates run on the Gram matrix of the centered columns: `q_j = x_jᵀ r`
/// is kept current in O(p) per coordinate step, so a sweep never touches
/// the n rows.
pub fn lasso(columns: &[Vec<f64>], y: &[f64], lambda: f64, warm: Option<&[f64]>) -> LassoFit {
    let p = columns.len();
    let (yc, ym) = center(y);
    let centered: Vec<(Vec<f64>, f64)> = columns.iter().map(|c| center(c)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut gram = vec![0.0; p * p];
    for j in 0..p {
        for k in j..p {
            let g = dot(&centered[j].0, &centered[k].0);
            gram[j * p + k] = g;
            gram[k * p + j] = g;
        }
    }
    let mut w = warm.map_or_else(|| vec![0.0; p], |w| w.to_vec());
    let mut q: Vec<f64> = (0..p)
        .map(|j| dot(&centered[j].0, &yc) - (0..p).map(|k| gram[j * p + k] * w[k]).sum::<f64>())
        .collect();
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    let mut converged = false;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        max_change = 0.0;
        for j in 0..p {
            let sq = gram[j * p + j];
            if sq == 0.0 {
                w[j] = 0.0;
                continue;
            }
            let rho = q[j] + sq * w[j];
            let new = soft_threshold(2.0 * rho, lambda) / (2.0 * sq);
            let delta = new - w[j];
            if delta != 0.0 {
                let row = &gram[j * p..(j + 1) * p];
                for (qk, g) in q.iter_mut().zip(row) {
                    *qk -= g * delta;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            let mut worst = 0.0f64;
            for j in 0..p {
                let g = 2.0 * q[j];
                let v = if w[j] != 0.0 { (g - lambda * w[j].signum()).abs() } else { (g.abs() - lambda).max(0.0) };
                worst = worst.max(v);
            }
            if worst <= LASSO_KKT_STOP || max_change == 0.0 {
                converged = true;
                break;
            }
        }
    }
    let intercept = ym - centered.iter().zip(&w).map(|((_, m), wj)| m * wj).sum::<f64>();
    LassoFit {
        weights: w,
        intercept,
        sweeps,
        max_change,
        converged,
    }
}

fn score(columns: &[Vec<f64>], fit: &LassoFit, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| fit.intercept + columns.iter().zip(&fit.weights).map(|(c, w)| c[i] * w).sum::<f64>())
        .collect()
}

fn pick(columns: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect()
}

/// Choose λ by stratified K-fold CV AUC (ties to the larger λ), refit on all
/// rows, then move to larger λ until the support fits under `cap`.
pub fn lasso_select(
    names: &[String],
    columns: &[Vec<f64>],
    labels: &[bool],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<(LassoReport, LassoFit)> {
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let lmax = lambda_max(columns, &y);
    let lambdas: Vec<f64> = cfg.lambda_ratios.iter().map(|r| r * lmax).collect();
    let folds = stratified_folds(labels, cfg.cv_folds, seed)?;
    let mut cv_auc = vec![0.0; lambdas.len()];
    for f in 0..cfg.cv_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let xt = pick(columns, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let lt: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let mut warm: Option<Vec<f64>> = None;
        for (li, &lam) in lambdas.iter().enumerate() {
            let fit = lasso(&xt, &yt, lam, warm.as_deref());
            cv_auc[li] += auc(&score(columns, &fit, &test), &lt)? / cfg.cv_folds as f64;
            warm = Some(fit.weights);
        }
    }
    let mut best = 0;
    for li in 1..lambdas.len() {
        let better = cv_auc[li] > cv_auc[best] + TIE_EPS
            || ((cv_auc[li] - cv_auc[best]).abs() <= TIE_EPS && lambdas[li] > lambdas[best]);
        if better {
            best = li;
        }
    }
    // path on the full training set, largest λ first, for warm starts
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());
    let mut fits: Vec<Option<LassoFit>> = vec![None; lambdas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for &li in &order {
        let fit = lasso(columns, &y, lambdas[li], warm.as_deref());
        warm = Some(fit.weights.clone());
        fits[li] = Some(fit);
    }
    let mut chosen = best;
    if let Some(cap) = cfg.max_final_features {
        let nnz = |li: usize| fits[li].as_ref().unwrap().weights.iter().filter(|&&w| w != 0.0).count();
        while nnz(chosen) > cap {
            // next larger λ on the grid
            match order.iter().rev().find(|&&li| lambdas[li] > lambdas[chosen]) {
                Some(&li) => chosen = li,
                None => break,
            }
        }
    }
    let fit = fits[chosen].take().unwrap();
    let kkt = kkt_violation(columns, &y, lambdas[chosen], &fit);
    if !fit.converged {
        log::warn!("LASSO stopped after {} sweeps, last change {:e}", fit.sweeps, fit.max_change);
    }
    let entries = names
        .iter()
        .zip(&fit.weights)
        .map(|(n, &w)| StageEntry {
            name: n.clone(),
            statistic: w,
            kept: w != 0.0,
        })
        .collect();
    Ok((
        LassoReport {
            lambda_max: lmax,
            lambdas: lambdas.clone(),
            cv_auc,
            best_lambda: lambdas[best],
            chosen_lambda: lambdas[chosen],
            entries,
            converged: fit.converged,
            max_change: fit.max_change,
            kkt_violation: kkt,
        },
        fit,
    ))
}

/// Training data for [`run_selection`].
pub struct SelectionInput<'a> {
    pub names: &'a [String],
    pub columns: &'a [Vec<f64>],
    pub labels: &'a [bool],
    /// Session-1 and session-2 columns of the re-segmented subset.
    pub repeat: Option<(&'a [Vec<f64>], &'a [Vec<f64>])>,
}

fn zscore_columns(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let sd = if c.len() > 1 {
                (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            c.iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect()
        })
        .collect()
}

/// Run all five stages in order on training data.
pub fn run_selection(input: &SelectionInput, cfg: &SelectionConfig, seed: u64) -> Result<SelectionReport> {
    cfg.validate()?;
    let mut report = SelectionReport {
        icc: Vec::new(),
        icc_skipped: false,
        utest: Vec::new(),
        decorrelate: Vec::new(),
        mrmr: Vec::new(),
        mrmr_truncated: false,
        lasso: None,
        selected: Vec::new(),
        coefficients: Vec::new(),
        empty_stage: None,
        warnings: Vec::new(),
    };
    let all: Vec<usize> = (0..input.names.len()).collect();

    let mut current = match input.repeat {
        Some((s1, s2)) => {
            report.icc = stage_icc(input.names, s1, s2, cfg.icc_threshold)?;
            all.iter().copied().filter(|&j| report.icc[j].kept).collect::<Vec<_>>()
        }
        None => {
            report.icc_skipped = true;
            report.warnings.push("no repeat-session data; ICC stage skipped".into());
            all.clone()
        }
    };
    let names_of = |idx: &[usize]| idx.iter().map(|&j| input.names[j].clone()).collect::<Vec<_>>();
    let cols_of = |idx: &[usize], src: &[Vec<f64>]| idx.iter().map(|&j| src[j].clone()).collect::<Vec<_>>();
    if current.is_empty() {
        report.empty_stage = Some("icc".into());
        return Ok(report);
    }

    report.utest = stage_utest(&names_of(&current), &cols_of(&current, input.columns), input.labels, cfg.p_threshold)?;
    let pvalues: Vec<f64> = report.utest.iter().filter(|e| e.kept).map(|e| e.statistic).collect();
    current = current
        .iter()
        .zip(&report.utest)
        .filter(|(_, e)| e.kept)
        .map(|(&j, _)| j)
        .collect();
    if current.is_empty() {
        report.empty_stage = Some("utest".into());
        return Ok(report);
    }

    report.decorrelate = stage_decorrelate(&names_of(&current), &cols_of(&current, input.columns), &pvalues, cfg.corr_threshold)?;
    let kept_names: Vec<&String> = report.decorrelate.iter().filter(|e| e.kept).map(|e| &e.name).collect();
    current.retain(|&j| kept_names.contains(&&input.names[j]));

    let z = zscore_columns(&cols_of(&current, input.columns));
    let names = names_of(&current);
    if cfg.mrmr_k > names.len() {
        report.mrmr_truncated = true;
        report
            .warnings
            .push(format!("mrmr_k = {} exceeds {} candidates; all kept", cfg.mrmr_k, names.len()));
    }
    report.mrmr = mrmr(&names, &z, input.labels, cfg.mrmr_k);
    let order: Vec<usize> = report
        .mrmr
        .iter()
        .map(|s| names.iter().position(|n| *n == s.name).unwrap())
        .collect();
    let mnames: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
    let mcols: Vec<Vec<f64>> = order.iter().map(|&i| z[i].clone()).collect();

    let (lasso_report, fit) = lasso_select(&mnames, &mcols, input.labels, cfg, seed)?;
    if !lasso_report.converged {
        report
            .warnings
            .push(format!("LASSO did not converge; last coefficient change {:e}", lasso_report.max_change));
    }
    for (n, &w) in mnames.iter().zip(&fit.weights) {
        if w != 0.0 {
            report.selected.push(n.clone());
            report.coefficients.push(w);
        }
    }
    report.lasso = Some(lasso_report);
    if report.selected.is_empty() {
        report.empty_stage = Some("lasso".into());
    }
    Ok(report)
}
