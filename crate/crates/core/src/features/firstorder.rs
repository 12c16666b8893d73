//! First-order intensity statistics over the ROI voxels.

use super::discretize::discretize_values;

pub const NAMES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Variance",
    "StandardDeviation",
    "Skewness",
    "Kurtosis",
];

/// Percentile of sorted data by linear interpolation between closest ranks
/// (position `(n - 1) q`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The 18 first-order values of `values`; entropy uses `ng` fixed bins.
pub fn first_order_values(values: &[f64], voxel_volume: f64, ng: usize) -> [f64; 18] {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let energy: f64 = values.iter().map(|v| v * v).sum();
    let mean = values.iter().sum::<f64>() / n;
    let mut hist = vec![0usize; ng + 1];
    for l in discretize_values(values, ng) {
        hist[l as usize] += 1;
    }
    let entropy: f64 = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>();
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let p10 = percentile_sorted(&sorted, 0.10);
    let p90 = percentile_sorted(&sorted, 0.90);
    let median = percentile_sorted(&sorted, 0.5);
    let iqr = percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25);
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let robust: Vec<f64> = values.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    // two distinct values leave nothing between the interpolated p10 and p90
    let rmad = if robust.is_empty() {
        0.0
    } else {
        let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
        robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64
    };
    let rms = (energy / n).sqrt();
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    [
        energy,
        energy * voxel_volume,
        entropy,
        min,
        p10,
        p90,
        max,
        mean,
        median,
        iqr,
        max - min,
        mad,
        rmad,
        rms,
        m2,
        m2.sqrt(),
        skew,
        kurt,
    ]
}
