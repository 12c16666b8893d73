//! Run-length (GLRLM), size-zone (GLSZM) and dependence (GLDM) matrices.
//! All three are sparse `(gray level, size) -> count` tables and share the
//! same family of summary statistics.

use std::collections::BTreeMap;

use super::discretize::DiscretizedRoi;
use super::glcm::average;

/// Sparse `(level, size) -> count` table.
pub type SizeMatrix = BTreeMap<(u16, u32), u64>;

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

/// Summary statistics of a size matrix, in the GLRLM/GLSZM feature order.
/// `np` is the ROI voxel count.
fn size_stats(m: &SizeMatrix, np: usize) -> [f64; 16] {
    let n: f64 = m.values().sum::<u64>() as f64;
    let mut by_level: BTreeMap<u16, f64> = BTreeMap::new();
    let mut by_size: BTreeMap<u32, f64> = BTreeMap::new();
    let mut mu_i = 0.0;
    let mut mu_s = 0.0;
    for (&(i, s), &c) in m {
        let c = c as f64;
        *by_level.entry(i).or_default() += c;
        *by_size.entry(s).or_default() += c;
        mu_i += c / n * f64::from(i);
        mu_s += c / n * f64::from(s);
    }
    let mut f = [0.0; 16];
    for (&(i, s), &c) in m {
        let p = c as f64 / n;
        let (i, s) = (f64::from(i), f64::from(s));
        let (i2, s2) = (i * i, s * s);
        f[0] += p / s2;
        f[1] += p * s2;
        f[7] += p * (i - mu_i).powi(2);
        f[8] += p * (s - mu_s).powi(2);
        f[9] -= p * p.log2();
        f[10] += p / i2;
        f[11] += p * i2;
        f[12] += p / (i2 * s2);
        f[13] += p * i2 / s2;
        f[14] += p * s2 / i2;
        f[15] += p * i2 * s2;
    }
    let gln: f64 = by_level.values().map(|v| v * v).sum();
    let sn: f64 = by_size.values().map(|v| v * v).sum();
    f[2] = gln / n;
    f[3] = gln / (n * n);
    f[4] = sn / n;
    f[5] = sn / (n * n);
    f[6] = n / np as f64;
    f
}

/// Maximal collinear same-level runs along one direction.
pub fn glrlm_matrix(d: &DiscretizedRoi, dir: [isize; 3]) -> SizeMatrix {
    let back = [-dir[0], -dir[1], -dir[2]];
    let mut m = SizeMatrix::new();
    for (idx, &l) in d.levels.iter().enumerate() {
        if l == 0 || d.level_at(idx, back) == l {
            continue;
        }
        let mut len = 1u32;
        let mut cur = idx;
        while let Some(next) = d.step(cur, dir) {
            if d.levels[next] != l {
                break;
            }
            len += 1;
            cur = next;
        }
        *m.entry((l, len)).or_default() += 1;
    }
    m
}

pub fn glrlm_matrices(d: &DiscretizedRoi) -> Vec<SizeMatrix> {
    d.directions().iter().map(|&dir| glrlm_matrix(d, dir)).collect()
}

/// Direction-averaged GLRLM features.
pub fn glrlm_features(d: &DiscretizedRoi) -> [f64; 16] {
    let np = d.voxel_count();
    average(glrlm_matrices(d).iter().map(|m| size_stats(m, np)))
}

/// Same-level connected components (26-connected, 8-connected planar).
pub fn glszm_matrix(d: &DiscretizedRoi) -> SizeMatrix {
    let nbrs = d.neighborhood();
    let mut seen = vec![false; d.levels.len()];
    let mut m = SizeMatrix::new();
    let mut stack = Vec::new();
    for start in 0..d.levels.len() {
        let l = d.levels[start];
        if l == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0u32;
        while let Some(cur) = stack.pop() {
            size += 1;
            for &off in &nbrs {
                if let Some(n) = d.step(cur, off) {
                    if !seen[n] && d.levels[n] == l {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        *m.entry((l, size)).or_default() += 1;
    }
    m
}

pub fn glszm_features(d: &DiscretizedRoi) -> [f64; 16] {
    size_stats(&glszm_matrix(d), d.voxel_count())
}

/// Dependence matrix with α = 0: size index = 1 + number of same-level ROI
/// neighbors within Chebyshev distance 1 (so it is never zero).
pub fn gldm_matrix(d: &DiscretizedRoi) -> SizeMatrix {
    let nbrs = d.neighborhood();
    let mut m = SizeMatrix::new();
    for (idx, &l) in d.levels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let dep = 1 + nbrs.iter().filter(|&&off| d.level_at(idx, off) == l).count() as u32;
        *m.entry((l, dep)).or_default() += 1;
    }
    m
}

pub fn gldm_features(d: &DiscretizedRoi) -> [f64; 14] {
    let s = size_stats(&gldm_matrix(d), d.voxel_count());
    let n = d.voxel_count() as f64;
    // GLDM normalizes by the voxel count, which equals the matrix total.
    [
        s[0], s[1], s[2], s[4], s[4] / n, s[7], s[8], s[9], s[10], s[11], s[12], s[13], s[14],
        s[15],
    ]
}
