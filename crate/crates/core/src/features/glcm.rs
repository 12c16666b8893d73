//! Gray-level co-occurrence matrices at distance 1 and their 24 features.
//! Features are computed per direction on the symmetrized, normalized
//! matrix and averaged over directions that contain at least one pair.

use nalgebra::DMatrix;

use super::discretize::DiscretizedRoi;
use crate::error::{Error, Result};

pub const NAMES: [&str; 24] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "MCC",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
];

/// Symmetric co-occurrence counts, row-major `ng × ng`, level `i` at row `i - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoMatrix {
    pub ng: usize,
    pub counts: Vec<u64>,
}

impl CoMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[(i - 1) * self.ng + (j - 1)]
    }

    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// One symmetrized count matrix per direction.
pub fn glcm_matrices(d: &DiscretizedRoi) -> Vec<CoMatrix> {
    let ng = d.ng;
    d.directions()
        .iter()
        .map(|&dir| {
            let mut counts = vec![0u64; ng * ng];
            for (idx, &a) in d.levels.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let b = d.level_at(idx, dir);
                if b == 0 {
                    continue;
                }
                let (a, b) = (a as usize - 1, b as usize - 1);
                counts[a * ng + b] += 1;
                counts[b * ng + a] += 1;
            }
            CoMatrix { ng, counts }
        })
        .collect()
}

/// Direction-averaged features; errors when no direction has a pair.
pub fn glcm_features(d: &DiscretizedRoi) -> Result<[f64; 24]> {
    let mats: Vec<CoMatrix> = glcm_matrices(d).into_iter().filter(|m| m.total() > 0).collect();
    if mats.is_empty() {
        return Err(Error::DegenerateTexture("no neighboring voxel pairs in ROI"));
    }
    Ok(average(mats.iter().map(|m| features_of(&m.normalized(), m.ng))))
}

/// Values reported for a flat (single gray level) ROI.
pub fn flat_features() -> [f64; 24] {
    features_of(&[1.0], 1)
}

pub(crate) fn average<const N: usize>(it: impl Iterator<Item = [f64; N]>) -> [f64; N] {
    let mut acc = [0.0; N];
    let mut n = 0usize;
    for f in it {
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v;
        }
        n += 1;
    }
    acc.map(|a| a / n as f64)
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Features of one normalized matrix `p` (row-major, levels 1..=ng).
pub fn features_of(p: &[f64], ng: usize) -> [f64; 24] {
    let at = |i: usize, j: usize| p[(i - 1) * ng + (j - 1)];
    let mut px = vec![0.0; ng + 1];
    let mut py = vec![0.0; ng + 1];
    let mut pxpy = vec![0.0; 2 * ng + 1];
    let mut pxmy = vec![0.0; ng];
    for i in 1..=ng {
        for j in 1..=ng {
            let v = at(i, j);
            px[i] += v;
            py[j] += v;
            pxpy[i + j] += v;
            pxmy[i.abs_diff(j)] += v;
        }
    }
    let mu_x: f64 = (1..=ng).map(|i| i as f64 * px[i]).sum();
    let mu_y: f64 = (1..=ng).map(|j| j as f64 * py[j]).sum();
    let var_x: f64 = (1..=ng).map(|i| (i as f64 - mu_x).powi(2) * px[i]).sum();
    let var_y: f64 = (1..=ng).map(|j| (j as f64 - mu_y).powi(2) * py[j]).sum();
    let (sd_x, sd_y) = (var_x.sqrt(), var_y.sqrt());

    let mut autocorr = 0.0;
    let mut prominence = 0.0;
    let mut shade = 0.0;
    let mut tendency = 0.0;
    let mut contrast = 0.0;
    let mut energy = 0.0;
    let mut hxy = 0.0;
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    let mut idm = 0.0;
    let mut idmn = 0.0;
    let mut id = 0.0;
    let mut idn = 0.0;
    let mut max_p: f64 = 0.0;
    let mut sum_squares = 0.0;
    let ngf = ng as f64;
    for i in 1..=ng {
        for j in 1..=ng {
            let v = at(i, j);
            let (fi, fj) = (i as f64, j as f64);
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy2 -= q * q.log2();
            }
            if v == 0.0 {
                continue;
            }
            let s = fi + fj - mu_x - mu_y;
            let d = fi - fj;
            autocorr += v * fi * fj;
            prominence += v * s.powi(4);
            shade += v * s.powi(3);
            tendency += v * s * s;
            contrast += v * d * d;
            energy += v * v;
            hxy -= plogp(v);
            hxy1 -= v * q.log2();
            idm += v / (1.0 + d * d);
            idmn += v / (1.0 + d * d / (ngf * ngf));
            id += v / (1.0 + d.abs());
            idn += v / (1.0 + d.abs() / ngf);
            max_p = max_p.max(v);
            sum_squares += v * (fi - mu_x).powi(2);
        }
    }
    let hx: f64 = -(1..=ng).map(|i| plogp(px[i])).sum::<f64>();
    let hy: f64 = -(1..=ng).map(|j| plogp(py[j])).sum::<f64>();

    let correlation = if sd_x * sd_y > 0.0 {
        ((autocorr - mu_x * mu_y) / (sd_x * sd_y)).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    let diff_avg: f64 = (0..ng).map(|k| k as f64 * pxmy[k]).sum();
    let diff_entropy: f64 = -pxmy.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_var: f64 = (0..ng).map(|k| (k as f64 - diff_avg).powi(2) * pxmy[k]).sum();
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (hxy - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).max(0.0).sqrt();
    let inv_var: f64 = (1..ng).map(|k| pxmy[k] / (k * k) as f64).sum();
    let sum_avg: f64 = (2..=2 * ng).map(|k| k as f64 * pxpy[k]).sum();
    let sum_entropy: f64 = -(2..=2 * ng).map(|k| plogp(pxpy[k])).sum::<f64>();
    let mcc = mcc(p, ng, &px);

    [
        autocorr,
        mu_x,
        prominence,
        shade,
        tendency,
        contrast,
        correlation,
        diff_avg,
        diff_entropy,
        diff_var,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        mcc,
        idmn,
        id,
        idn,
        inv_var,
        max_p,
        sum_avg,
        sum_entropy,
        sum_squares,
    ]
}

/// Maximal correlation coefficient: second largest eigenvalue of
/// `Q = D⁻¹ P D⁻¹ P` (square-rooted). For symmetric `P` the eigenvalues of Q
/// are the squared eigenvalues of `D^-1/2 P D^-1/2`, which is symmetric.
fn mcc(p: &[f64], ng: usize, px: &[f64]) -> f64 {
    let occupied: Vec<usize> = (1..=ng).filter(|&i| px[i] > 0.0).collect();
    let m = occupied.len();
    if m < 2 {
        return 1.0;
    }
    let s = DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (occupied[a], occupied[b]);
        p[(i - 1) * ng + (j - 1)] / (px[i] * px[j]).sqrt()
    });
    let mut eig: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().map(|l| l * l).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig[1].clamp(0.0, 1.0).sqrt()
}
