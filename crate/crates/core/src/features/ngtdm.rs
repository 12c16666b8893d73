//! Neighbouring gray tone difference matrix.

use super::discretize::DiscretizedRoi;

pub const NAMES: [&str; 5] = ["Coarseness", "Contrast", "Busyness", "Complexity", "Strength"];

/// Coarseness reported when the tone differences sum to zero.
pub const COARSENESS_CAP: f64 = 1e6;

/// Per-level voxel counts `n` and absolute tone-difference sums `s`
/// (index 0 unused). Voxels without ROI neighbors are not counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Ngtdm {
    pub n: Vec<u64>,
    pub s: Vec<f64>,
}

pub fn ngtdm_matrix(d: &DiscretizedRoi) -> Ngtdm {
    let nbrs = d.neighborhood();
    let mut n = vec![0u64; d.ng + 1];
    let mut s = vec![0.0; d.ng + 1];
    for (idx, &l) in d.levels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let mut sum = 0u64;
        let mut cnt = 0u64;
        for &off in &nbrs {
            let v = d.level_at(idx, off);
            if v > 0 {
                sum += u64::from(v);
                cnt += 1;
            }
        }
        if cnt == 0 {
            continue;
        }
        n[l as usize] += 1;
        s[l as usize] += (f64::from(l) - sum as f64 / cnt as f64).abs();
    }
    Ngtdm { n, s }
}

pub fn ngtdm_features(d: &DiscretizedRoi) -> [f64; 5] {
    features_of(&ngtdm_matrix(d))
}

pub fn features_of(m: &Ngtdm) -> [f64; 5] {
    let nvp: u64 = m.n.iter().sum();
    if nvp == 0 {
        return [COARSENESS_CAP, 0.0, 0.0, 0.0, 0.0];
    }
    let nvp = nvp as f64;
    let levels: Vec<(f64, f64, f64)> = m
        .n
        .iter()
        .zip(&m.s)
        .enumerate()
        .filter(|(_, (&n, _))| n > 0)
        .map(|(i, (&n, &s))| (i as f64, n as f64 / nvp, s))
        .collect();
    let ngp = levels.len() as f64;
    let sum_ps: f64 = levels.iter().map(|&(_, p, s)| p * s).sum();
    let sum_s: f64 = levels.iter().map(|&(_, _, s)| s).sum();

    let coarseness = if sum_ps > 0.0 { (1.0 / sum_ps).min(COARSENESS_CAP) } else { COARSENESS_CAP };
    let mut pair_sq = 0.0;
    let mut busy_den = 0.0;
    let mut complexity = 0.0;
    let mut strength_num = 0.0;
    for &(i, pi, si) in &levels {
        for &(j, pj, sj) in &levels {
            pair_sq += pi * pj * (i - j).powi(2);
            busy_den += (i * pi - j * pj).abs();
            complexity += (i - j).abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * (i - j).powi(2);
        }
    }
    let contrast = if ngp > 1.0 { pair_sq / (ngp * (ngp - 1.0)) * sum_s / nvp } else { 0.0 };
    let busyness = if busy_den > 0.0 { sum_ps / busy_den } else { 0.0 };
    let complexity = complexity / nvp;
    let strength = if sum_s > 0.0 { strength_num / sum_s } else { 0.0 };
    [coarseness, contrast, busyness, complexity, strength]
}
