//! Classifiers and cross-validated model choice.
//!
//! Inputs are row-major (`x[i]` is patient `i`) and already standardized;
//! [`ModelArtifact`] carries its own z-score parameters so it can score raw
//! feature rows later.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{auc, ZScoreParams};

pub const DEFAULT_L2: f64 = 1e-4;
const NEWTON_GRAD_TOL: f64 = 1e-8;
/// Relative bound on the Newton decrement `gᵀH⁻¹g`.
const NEWTON_DECREMENT_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 200;
pub const SMO_TOL: f64 = 1e-3;
const SMO_MAX_UPDATES: usize = 1_000_000;
const SMO_TAU: f64 = 1e-12;
const TIE_EPS: f64 = 1e-12;

/// Fold index per sample: each class is shuffled with its own seeded stream
/// and dealt round-robin, so class proportions match across folds.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut out = vec![0usize; labels.len()];
    for (stream, class) in [true, false].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::StratifyTooSmall {
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut stream_rng(seed, stream as u64));
        for (k, i) in idx.into_iter().enumerate() {
            out[i] = k % folds;
        }
    }
    Ok(out)
}

fn check_xy(x: &[Vec<f64>], y: &[bool]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidInput("feature rows and labels differ in length".into()));
    }
    if !y.contains(&true) || !y.contains(&false) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl LogisticFit {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

/// Negative log-likelihood plus `l2/2 ‖w‖²` (intercept unpenalized).
pub fn logistic_objective(x: &[Vec<f64>], y: &[bool], l2: f64, w: &[f64], b: f64) -> f64 {
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &l)| {
            let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            if l {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    nll + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`logistic_objective`], weights first, intercept last.
pub fn logistic_gradient(x: &[Vec<f64>], y: &[bool], l2: f64, w: &[f64], b: f64) -> Vec<f64> {
    let p = w.len();
    let mut g = vec![0.0; p + 1];
    for (row, &l) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = sigmoid(z) - f64::from(u8::from(l));
        for j in 0..p {
            g[j] += r * row[j];
        }
        g[p] += r;
    }
    for j in 0..p {
        g[j] += l2 * w[j];
    }
    g
}

/// Damped Newton on the L2-penalized log-likelihood. Stops when the
/// gradient ∞-norm drops below 1e-8, when the Newton decrement says the
/// objective cannot drop by more than its own rounding, or after 200
/// iterations; a stalled fit is returned with `converged = false`.
pub fn logistic_fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Result<LogisticFit> {
    check_xy(x, y)?;
    if !(l2 > 0.0) {
        return Err(Error::InvalidInput("L2 strength must be positive".into()));
    }
    let p = x[0].len();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut obj = logistic_objective(x, y, l2, &w, b);
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;
    let mut converged = false;
    while iterations < NEWTON_MAX_ITER {
        let g = logistic_gradient(x, y, l2, &w, b);
        gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < NEWTON_GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(p + 1, p + 1);
        for row in x {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let s = sigmoid(z);
            let d = s * (1.0 - s);
            for a in 0..=p {
                let xa = if a < p { row[a] } else { 1.0 };
                for c in 0..=a {
                    let xc = if c < p { row[c] } else { 1.0 };
                    h[(a, c)] += d * xa * xc;
                }
            }
        }
        for a in 0..=p {
            for c in 0..a {
                h[(c, a)] = h[(a, c)];
            }
            h[(a, a)] += if a < p { l2 } else { 1e-12 };
        }
        let rhs = DVector::from_iterator(p + 1, g.iter().map(|v| -v));
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => rhs.clone(),
        };
        let slope: f64 = step.iter().zip(&g).map(|(s, gv)| s * gv).sum();
        // near-separable data: the summed gradient can stall just above the
        // absolute tolerance while the predicted decrease is already noise
        if -slope <= NEWTON_DECREMENT_TOL * obj.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let wn: Vec<f64> = (0..p).map(|j| w[j] + t * step[j]).collect();
            let bn = b + t * step[p];
            let on = logistic_objective(x, y, l2, &wn, bn);
            if on <= obj + 1e-4 * t * slope {
                w = wn;
                b = bn;
                obj = on;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        log::warn!("logistic fit stopped after {iterations} iterations, gradient {gnorm:e}");
    }
    Ok(LogisticFit {
        weights: w,
        intercept: b,
        l2,
        iterations,
        objective: obj,
        gradient_norm: gnorm,
        converged,
    })
}

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    (-gamma * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    pub support: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub gamma: f64,
    pub iterations: usize,
    /// Dual objective `Σα - ½ αᵀQα` at the solution.
    pub dual_objective: f64,
}

impl SvmFit {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .support
                .iter()
                .zip(&self.dual_coef)
                .map(|(s, a)| a * rbf(s, row, self.gamma))
                .sum::<f64>()
    }
}

/// Full dual solution of [`svm_rbf_fit`], including zero multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDual {
    pub alpha: Vec<f64>,
    pub fit: SvmFit,
}

/// Soft-margin RBF SVM by sequential minimal optimization with the
/// maximal-violating-pair working set; stops at a KKT gap below 1e-3.
pub fn svm_rbf_fit(x: &[Vec<f64>], y: &[bool], c: f64, gamma: f64) -> Result<SvmFit> {
    svm_rbf_dual(x, y, c, gamma).map(|d| d.fit)
}

pub fn svm_rbf_dual(x: &[Vec<f64>], y: &[bool], c: f64, gamma: f64) -> Result<SvmDual> {
    check_xy(x, y)?;
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidInput("SVM needs positive C and gamma".into()));
    }
    let n = x.len();
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rbf(&x[i], &x[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| ys[i] * ys[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut bi, mut bj) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -ys[t] * grad[t];
            let up = if ys[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if ys[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                bi = t;
            }
            if low && v < gmin {
                gmin = v;
                bj = t;
            }
        }
        if gmax - gmin < SMO_TOL || bi == usize::MAX || bj == usize::MAX {
            break;
        }
        if iterations >= SMO_MAX_UPDATES {
            return Err(Error::NonConvergence(format!(
                "SMO exceeded {SMO_MAX_UPDATES} pair updates, KKT gap {:e}",
                gmax - gmin
            )));
        }
        iterations += 1;
        let (i, j) = (bi, bj);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = SMO_TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = SMO_TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }
    // ρ from free multipliers, or the middle of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    let dual_objective = -alpha.iter().zip(&grad).map(|(a, g)| 0.5 * a * (g - 1.0)).sum::<f64>();
    let mut support = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(x[t].clone());
            dual_coef.push(alpha[t] * ys[t]);
        }
    }
    Ok(SvmDual {
        alpha,
        fit: SvmFit {
            support,
            dual_coef,
            intercept: -rho,
            c,
            gamma,
            iterations,
            dual_objective,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GridPoint {
    Logistic { l2: f64 },
    SvmRbf { c: f64, gamma: f64 },
}

impl GridPoint {
    /// Preference among equal CV scores: smaller C, then stronger
    /// regularization (larger λ, smaller γ).
    fn simpler_than(&self, other: &GridPoint) -> bool {
        match (self, other) {
            (GridPoint::Logistic { l2: a }, GridPoint::Logistic { l2: b }) => a > b,
            (GridPoint::SvmRbf { c: c1, gamma: g1 }, GridPoint::SvmRbf { c: c2, gamma: g2 }) => {
                c1 < c2 || (c1 == c2 && g1 < g2)
            }
            (GridPoint::Logistic { .. }, GridPoint::SvmRbf { .. }) => true,
            (GridPoint::SvmRbf { .. }, GridPoint::Logistic { .. }) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Logistic,
    SvmRbf,
}

/// Default logistic grid (L2 strengths).
pub fn default_logistic_grid() -> Vec<GridPoint> {
    [DEFAULT_L2, 1e-2, 1.0]
        .into_iter()
        .map(|l2| GridPoint::Logistic { l2 })
        .collect()
}

/// `C ∈ {0.1, 1, 10, 100}`, `γ ∈ {0.01, 0.1, 1} / p`.
pub fn default_svm_grid(features: usize) -> Vec<GridPoint> {
    let p = features.max(1) as f64;
    let mut out = Vec::new();
    for c in [0.1, 1.0, 10.0, 100.0] {
        for g in [0.01, 0.1, 1.0] {
            out.push(GridPoint::SvmRbf { c, gamma: g / p });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Logistic(LogisticFit),
    SvmRbf(SvmFit),
}

impl Fitted {
    /// Logistic probability or raw SVM decision value.
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            Fitted::Logistic(m) => m.predict_proba(row),
            Fitted::SvmRbf(m) => m.decision(row),
        }
    }
}

pub fn fit_point(x: &[Vec<f64>], y: &[bool], point: &GridPoint) -> Result<Fitted> {
    Ok(match *point {
        GridPoint::Logistic { l2 } => Fitted::Logistic(logistic_fit(x, y, l2)?),
        GridPoint::SvmRbf { c, gamma } => Fitted::SvmRbf(svm_rbf_fit(x, y, c, gamma)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: GridPoint,
    pub fold_auc: Vec<f64>,
    /// NaN when some fold failed to fit.
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub chosen: GridPoint,
    pub mean_auc: f64,
    pub table: Vec<CvRow>,
}

/// Stratified K-fold grid search by mean fold AUC.
pub fn grid_search_cv(x: &[Vec<f64>], y: &[bool], grid: &[GridPoint], folds: usize, seed: u64) -> Result<GridResult> {
    check_xy(x, y)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    let assign = stratified_folds(y, folds, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let train = (0..y.len()).filter(|&i| assign[i] != f).collect();
            let test = (0..y.len()).filter(|&i| assign[i] == f).collect();
            (train, test)
        })
        .collect();
    let table: Vec<CvRow> = grid
        .par_iter()
        .map(|point| {
            let fold_auc: Vec<f64> = splits
                .iter()
                .map(|(train, test)| {
                    let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
                    let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
                    match fit_point(&xt, &yt, point) {
                        Ok(m) => {
                            let s: Vec<f64> = test.iter().map(|&i| m.score(&x[i])).collect();
                            let l: Vec<bool> = test.iter().map(|&i| y[i]).collect();
                            auc(&s, &l).unwrap_or(f64::NAN)
                        }
                        Err(e) => {
                            log::warn!("grid point {point:?} failed: {e}");
                            f64::NAN
                        }
                    }
                })
                .collect();
            let mean_auc = fold_auc.iter().sum::<f64>() / folds as f64;
            CvRow {
                point: *point,
                fold_auc,
                mean_auc,
            }
        })
        .collect();
    let mut best: Option<&CvRow> = None;
    for row in table.iter().filter(|r| r.mean_auc.is_finite()) {
        best = match best {
            None => Some(row),
            Some(b) => match row.mean_auc.partial_cmp(&b.mean_auc).unwrap() {
                _ if (row.mean_auc - b.mean_auc).abs() <= TIE_EPS => {
                    if row.point.simpler_than(&b.point) {
                        Some(row)
                    } else {
                        Some(b)
                    }
                }
                Ordering::Greater => Some(row),
                _ => Some(b),
            },
        };
    }
    let best = best.ok_or_else(|| Error::NonConvergence("no grid point could be fitted".into()))?;
    Ok(GridResult {
        chosen: best.point,
        mean_auc: best.mean_auc,
        table,
    })
}

/// A trained classifier with everything needed to score raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub descriptors: Vec<String>,
    pub scaling: ZScoreParams,
    pub model: Fitted,
    pub chosen: GridPoint,
    pub cv_auc: f64,
    pub cv_table: Vec<CvRow>,
    pub converged: bool,
}

impl ModelArtifact {
    /// Score one raw (unstandardized) row ordered as `descriptors`.
    pub fn score_raw(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row.iter().enumerate().map(|(j, &v)| self.scaling.apply_value(j, v)).collect();
        self.model.score(&z)
    }
}

/// Grid-search both model kinds on standardized training rows, keep the kind
/// with the higher CV AUC (logistic on ties) and refit it on all rows.
pub fn train_model(
    descriptors: &[String],
    raw: &[Vec<f64>],
    y: &[bool],
    folds: usize,
    seed: u64,
) -> Result<ModelArtifact> {
    let scaling = crate::stats::zscore_fit(raw)?;
    let x = scaling.apply(raw);
    let lr = grid_search_cv(&x, y, &default_logistic_grid(), folds, seed)?;
    let svm = grid_search_cv(&x, y, &default_svm_grid(descriptors.len()), folds, seed)?;
    let pick = if svm.mean_auc > lr.mean_auc + TIE_EPS { svm } else { lr };
    let model = fit_point(&x, y, &pick.chosen)?;
    let (kind, converged) = match &model {
        Fitted::Logistic(m) => (ModelKind::Logistic, m.converged),
        Fitted::SvmRbf(_) => (ModelKind::SvmRbf, true),
    };
    Ok(ModelArtifact {
        kind,
        descriptors: descriptors.to_vec(),
        scaling,
        model,
        chosen: pick.chosen,
        cv_auc: pick.mean_auc,
        cv_table: pick.table,
        converged,
    })
}
