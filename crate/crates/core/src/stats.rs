//! Statistical primitives used by feature selection and model evaluation.
//! Labels are `bool` with `true` marking the positive class throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::features::firstorder::percentile_sorted;
use crate::rng::stream_rng;

/// Sizes above this product use the normal approximation.
pub const EXACT_U_LIMIT: usize = 400;

/// Per-feature standardization parameters fitted on a training block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub mean: Vec<f64>,
    /// Sample standard deviation (N - 1 denominator).
    pub sd: Vec<f64>,
}

impl ZScoreParams {
    pub fn is_constant(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    pub fn apply_value(&self, j: usize, x: f64) -> f64 {
        if self.is_constant(j) {
            0.0
        } else {
            (x - self.mean[j]) / self.sd[j]
        }
    }

    /// Standardize rows of `x` (each of the fitted width).
    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| row.iter().enumerate().map(|(j, &v)| self.apply_value(j, v)).collect())
            .collect()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Fit on row-major training data; a single row gives zero spread.
pub fn zscore_fit(x: &[Vec<f64>]) -> Result<ZScoreParams> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidInput("z-score fit needs at least one row".into()));
    }
    let p = x[0].len();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let m = self::mean(&col);
        mean[j] = m;
        if n > 1 && col.iter().any(|&v| v != col[0]) {
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            sd[j] = (ss / (n - 1) as f64).sqrt();
        }
    }
    Ok(ZScoreParams { mean, sd })
}

/// Mid-ranks (1-based), ties share their average rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("NaN in ranking"));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// The smaller of the two group statistics.
    pub u: f64,
    pub p: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> Result<UTestResult> {
    let (n1, n2) = (pos.len(), neg.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("U test needs two nonempty groups".into()));
    }
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let ranks = midranks(&all);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u = u1.min(u2);
    let exact = n1 * n2 <= EXACT_U_LIMIT;
    let p = if exact {
        // the two tails are mirror images, so count subsets of the smaller
        // group; this keeps the subset counts well inside u128
        if n1 <= n2 {
            exact_rank_sum_p(&ranks, n1, r1)
        } else {
            let total = (n1 + n2) as f64 * (n1 + n2 + 1) as f64 / 2.0;
            exact_rank_sum_p(&ranks, n2, total - r1)
        }
    } else {
        normal_u_p(&all, n1, n2, u1)
    };
    Ok(UTestResult {
        u,
        p,
        n_pos: n1,
        n_neg: n2,
        exact,
    })
}

/// Exact permutation distribution of the rank sum of a group of size `k`,
/// with the observed mid-ranks fixed. Ranks are doubled so every sum is an integer.
fn exact_rank_sum_p(ranks: &[f64], size: usize, rank_sum: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled sum s
    let mut counts = vec![vec![0u128; max_sum + 1]; size + 1];
    counts[0][0] = 1;
    for (i, &r) in doubled.iter().enumerate() {
        for k in (1..=size.min(i + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let (src, dst) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                if src[s - r] != 0 {
                    dst[s] += src[s - r];
                }
            }
        }
    }
    let observed = (rank_sum * 2.0).round() as usize;
    let dist = &counts[size];
    let total: u128 = dist.iter().sum();
    let below: u128 = dist[..=observed].iter().sum();
    let above: u128 = dist[observed..].iter().sum();
    let tail = below.min(above) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

fn normal_u_p(all: &[f64], n1: usize, n2: usize, u1: f64) -> f64 {
    let n = (n1 + n2) as f64;
    let mut sorted = all.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nn = (n1 * n2) as f64;
    let var = nn / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u1 - nn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson needs equal lengths >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
/// A table with no variance at all scores 1 when the sessions agree.
pub fn icc_2_1(s1: &[f64], s2: &[f64]) -> Result<f64> {
    let n = s1.len();
    if n != s2.len() {
        return Err(Error::InvalidInput("ICC sessions differ in length".into()));
    }
    if n < 3 {
        return Err(Error::InvalidInput("ICC needs at least 3 subjects".into()));
    }
    let k = 2.0;
    let nf = n as f64;
    let grand = (s1.iter().sum::<f64>() + s2.iter().sum::<f64>()) / (2.0 * nf);
    let c1 = mean(s1);
    let c2 = mean(s2);
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for (a, b) in s1.iter().zip(s2) {
        let rm = (a + b) / 2.0;
        ssr += k * (rm - grand) * (rm - grand);
        sst += (a - grand) * (a - grand) + (b - grand) * (b - grand);
    }
    let ssc = nf * ((c1 - grand).powi(2) + (c2 - grand).powi(2));
    let sse = (sst - ssr - ssc).max(0.0);
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (k - 1.0);
    let mse = sse / ((nf - 1.0) * (k - 1.0));
    let den = msr + (k - 1.0) * mse + k * (msc - mse) / nf;
    if den <= 0.0 {
        return Ok(if s1 == s2 { 1.0 } else { 0.0 });
    }
    Ok(((msr - mse) / den).clamp(-1.0, 1.0))
}

/// Plug-in mutual information (nats) between bin indices and labels.
pub fn mutual_information(x: &[usize], y: &[bool]) -> f64 {
    let y: Vec<usize> = y.iter().map(|&l| usize::from(l)).collect();
    mutual_information_discrete(x, &y)
}

/// Plug-in mutual information (nats) of two discrete sequences; empty joint
/// cells contribute nothing.
pub fn mutual_information_discrete(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let bx = x.iter().max().map_or(0, |m| m + 1);
    let by = y.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; bx * by];
    let mut mx = vec![0usize; bx];
    let mut my = vec![0usize; by];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * by + b] += 1;
        mx[a] += 1;
        my[b] += 1;
    }
    let mut mi = 0.0;
    for a in 0..bx {
        for b in 0..by {
            let c = joint[a * by + b];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy * n * n / (mx[a] as f64 * my[b] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// P(score_pos > score_neg) + ½ P(tie), via mid-ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    let (n1, n2) = class_counts(labels)?;
    let ranks = midranks(scores);
    let r1: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Ok((r1 - (n1 * (n1 + 1)) as f64 / 2.0) / (n1 * n2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive; the first point uses +∞.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub ci: Option<BootstrapCi>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// ROC curve with one point per distinct score, from (0,0) to (1,1).
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    let auc = auc(scores, labels)?;
    let (n1, n2) = class_counts(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n2 as f64,
            tpr: tp as f64 / n1 as f64,
            threshold: s,
        });
    }
    Ok(RocResult {
        points,
        auc,
        ci: None,
    })
}

/// Trapezoidal area under ROC points.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Percentile bootstrap 95 % CI of the AUC. Resample `b` draws from its own
/// stream `(seed, b)`; draws missing a class are redrawn from that stream.
pub fn bootstrap_auc_ci(scores: &[f64], labels: &[bool], resamples: usize, seed: u64) -> Result<BootstrapCi> {
    use rand::Rng;
    class_counts(labels)?;
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if resamples < 100 {
        return Err(Error::InvalidInput("bootstrap needs at least 100 resamples".into()));
    }
    let n = scores.len();
    let mut aucs: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            loop {
                let pick: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let l: Vec<bool> = pick.iter().map(|&i| labels[i]).collect();
                if let Ok(a) = auc(&pick.iter().map(|&i| scores[i]).collect::<Vec<_>>(), &l) {
                    return a;
                }
            }
        })
        .collect();
    aucs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BootstrapCi {
        lo: percentile_sorted(&aucs, 0.025),
        hi: percentile_sorted(&aucs, 0.975),
        resamples,
        seed,
    })
}
