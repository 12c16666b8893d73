//! Seeded patient-level training/validation split.

use rand::seq::SliceRandom;

use radiomx_core::imgio::Cohort;
use radiomx_core::rng::stream_rng;

/// Training count for `n` patients at `ratio`, leaving at least one patient
/// on each side whenever `n ≥ 2`.
pub fn training_count(n: usize, ratio: f64) -> usize {
    if n < 2 {
        return n;
    }
    ((n as f64 * ratio).round() as usize).clamp(1, n - 1)
}

/// Assign each of `n` patients to a cohort. With `strata`, each stratum is
/// split at `ratio` on its own (patients without a stratum form their own
/// group); otherwise the split is simple random.
pub fn split_patients(n: usize, strata: Option<&[Option<bool>]>, ratio: f64, seed: u64) -> Vec<Cohort> {
    let mut out = vec![Cohort::Validation; n];
    let groups: Vec<Vec<usize>> = match strata {
        None => vec![(0..n).collect()],
        Some(s) => [Some(true), Some(false), None]
            .iter()
            .map(|g| (0..n).filter(|&i| s[i] == *g).collect())
            .collect(),
    };
    for (stream, mut idx) in groups.into_iter().enumerate() {
        idx.shuffle(&mut stream_rng(seed, stream as u64));
        let k = training_count(idx.len(), ratio);
        for &i in &idx[..k] {
            out[i] = Cohort::Training;
        }
    }
    out
}
