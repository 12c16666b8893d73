//! Brute-force reference implementations and the measured checks built on
//! them. Shared by this crate's integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radiomx_core::features::discretize::{DiscretizedRoi, RoiMode};
use radiomx_core::features::firstorder::first_order_values;
use radiomx_core::features::glcm::{glcm_features, glcm_matrices};
use radiomx_core::features::ngtdm::{ngtdm_features, ngtdm_matrix, COARSENESS_CAP};
use radiomx_core::features::shape::shape_3d;
use radiomx_core::features::zones::{
    gldm_features, gldm_matrix, glrlm_features, glrlm_matrix, glszm_features, glszm_matrix, SizeMatrix,
};
use radiomx_core::imgio::{Geometry, ImageVolume};
use radiomx_core::learn::svm_rbf_dual;
use radiomx_core::resample::{resample_volume, ResampleAxes, ResampleSpec};
use radiomx_core::select::{equal_frequency_bins, lambda_max, lasso, mrmr, stage_decorrelate, MRMR_BINS};
use radiomx_core::stats::{auc, bootstrap_auc_ci, icc_2_1, mann_whitney, EXACT_U_LIMIT};
use radiomx_core::wavelet::{swt3, BAND_LABELS, HIGH, LOW};

/// Outcome of one measured property.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name,
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- texture

pub fn random_roi(r: &mut ChaCha8Rng) -> DiscretizedRoi {
    let planar = r.random_bool(0.3);
    let dims = [
        r.random_range(1..=6),
        r.random_range(1..=6),
        if planar { 1 } else { r.random_range(1..=6) },
    ];
    let ng = r.random_range(1..=4);
    let fill = r.random_range(0.4..1.0);
    let n = dims[0] * dims[1] * dims[2];
    let mut levels: Vec<u16> = (0..n)
        .map(|_| if r.random_bool(fill) { r.random_range(1..=ng as u16) } else { 0 })
        .collect();
    if levels.iter().all(|&l| l == 0) {
        levels[r.random_range(0..n)] = 1;
    }
    DiscretizedRoi {
        dims,
        levels,
        ng,
        mode: if planar { RoiMode::Planar(0) } else { RoiMode::Volumetric },
    }
}

fn roi_voxels(d: &DiscretizedRoi) -> Vec<([isize; 3], u16)> {
    let mut out = Vec::new();
    for z in 0..d.dims[2] {
        for y in 0..d.dims[1] {
            for x in 0..d.dims[0] {
                let l = d.levels[x + d.dims[0] * (y + d.dims[1] * z)];
                if l > 0 {
                    out.push(([x as isize, y as isize, z as isize], l));
                }
            }
        }
    }
    out
}

fn diff(a: [isize; 3], b: [isize; 3]) -> [isize; 3] {
    [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
}

fn touching(d: &DiscretizedRoi, a: [isize; 3], b: [isize; 3]) -> bool {
    let v = diff(a, b);
    let cheb = v.iter().map(|c| c.abs()).max().unwrap();
    let planar_ok = !matches!(d.mode, RoiMode::Planar(_)) || v[2] == 0;
    cheb == 1 && planar_ok
}

/// Symmetric co-occurrence counts for `dir`, by enumerating every ordered
/// voxel pair.
pub fn brute_glcm(d: &DiscretizedRoi, dir: [isize; 3]) -> Vec<u64> {
    let ng = d.ng;
    let vox = roi_voxels(d);
    let mut m = vec![0u64; ng * ng];
    for &(a, la) in &vox {
        for &(b, lb) in &vox {
            if diff(a, b) == dir {
                let (i, j) = (la as usize - 1, lb as usize - 1);
                m[i * ng + j] += 1;
                m[j * ng + i] += 1;
            }
        }
    }
    m
}

/// Every maximal same-level segment along `dir`, found by trying all
/// starting voxels and lengths.
pub fn brute_runs(d: &DiscretizedRoi, dir: [isize; 3]) -> SizeMatrix {
    let level = |p: [isize; 3]| -> u16 {
        if (0..3).any(|a| p[a] < 0 || p[a] >= d.dims[a] as isize) {
            0
        } else {
            d.levels[p[0] as usize + d.dims[0] * (p[1] as usize + d.dims[1] * p[2] as usize)]
        }
    };
    let at = |p: [isize; 3], k: isize| [p[0] + k * dir[0], p[1] + k * dir[1], p[2] + k * dir[2]];
    let mut m = SizeMatrix::new();
    let longest = *d.dims.iter().max().unwrap() as isize;
    for (p, l) in roi_voxels(d) {
        for len in 1..=longest {
            let inside = (0..len).all(|k| level(at(p, k)) == l);
            if inside && level(at(p, -1)) != l && level(at(p, len)) != l {
                *m.entry((l, len as u32)).or_default() += 1;
            }
        }
    }
    m
}

/// Same-level connected components by union-find over all touching pairs.
pub fn brute_zones(d: &DiscretizedRoi) -> SizeMatrix {
    let vox = roi_voxels(d);
    let mut parent: Vec<usize> = (0..vox.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for a in 0..vox.len() {
        for b in 0..vox.len() {
            if vox[a].1 == vox[b].1 && touching(d, vox[a].0, vox[b].0) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut sizes: BTreeMap<usize, (u16, u32)> = BTreeMap::new();
    for i in 0..vox.len() {
        let r = find(&mut parent, i);
        sizes.entry(r).or_insert((vox[i].1, 0)).1 += 1;
    }
    let mut m = SizeMatrix::new();
    for (_, key) in sizes {
        *m.entry(key).or_default() += 1;
    }
    m
}

/// `1 + #same-level touching voxels` per voxel.
pub fn brute_dependence(d: &DiscretizedRoi) -> SizeMatrix {
    let vox = roi_voxels(d);
    let mut m = SizeMatrix::new();
    for &(a, la) in &vox {
        let dep = 1 + vox.iter().filter(|&&(b, lb)| lb == la && touching(d, a, b)).count() as u32;
        *m.entry((la, dep)).or_default() += 1;
    }
    m
}

/// Per-level counts and tone-difference sums by scanning all voxel pairs.
pub fn brute_ngtdm(d: &DiscretizedRoi) -> (Vec<u64>, Vec<f64>) {
    let vox = roi_voxels(d);
    let mut n = vec![0u64; d.ng + 1];
    let mut s = vec![0.0; d.ng + 1];
    for &(a, la) in &vox {
        let nb: Vec<f64> = vox
            .iter()
            .filter(|&&(b, _)| touching(d, a, b))
            .map(|&(_, lb)| f64::from(lb))
            .collect();
        if nb.is_empty() {
            continue;
        }
        let avg = nb.iter().sum::<f64>() / nb.len() as f64;
        n[la as usize] += 1;
        s[la as usize] += (f64::from(la) - avg).abs();
    }
    (n, s)
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Direct textbook GLCM features of one normalized matrix.
pub fn glcm_feature_oracle(p: &DMatrix<f64>) -> [f64; 24] {
    let ng = p.nrows();
    let lv = |i: usize| (i + 1) as f64;
    let px: Vec<f64> = (0..ng).map(|i| p.row(i).sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| p.column(j).sum()).collect();
    let mux: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let muy: f64 = (0..ng).map(|j| lv(j) * py[j]).sum();
    let sdx = (0..ng).map(|i| (lv(i) - mux).powi(2) * px[i]).sum::<f64>().sqrt();
    let sdy = (0..ng).map(|j| (lv(j) - muy).powi(2) * py[j]).sum::<f64>().sqrt();
    let mut sum_dist = vec![0.0; 2 * ng + 2];
    let mut diff_dist = vec![0.0; ng];
    let cells = || (0..ng).flat_map(move |i| (0..ng).map(move |j| (i, j)));
    for (i, j) in cells() {
        sum_dist[i + j + 2] += p[(i, j)];
        diff_dist[i.abs_diff(j)] += p[(i, j)];
    }
    let total = |f: &dyn Fn(usize, usize, f64) -> f64| cells().map(|(i, j)| f(i, j, p[(i, j)])).sum::<f64>();
    let autocorr = total(&|i, j, v| v * lv(i) * lv(j));
    let s = |i: usize, j: usize| lv(i) + lv(j) - mux - muy;
    let hxy = total(&|_, _, v| h(v));
    let hxy1 = total(&|i, j, v| if v > 0.0 { -v * (px[i] * py[j]).log2() } else { 0.0 });
    let hxy2 = total(&|i, j, _| h(px[i] * py[j]));
    let hx: f64 = px.iter().map(|&v| h(v)).sum();
    let hy: f64 = py.iter().map(|&v| h(v)).sum();
    let corr = if sdx * sdy > 0.0 { ((autocorr - mux * muy) / (sdx * sdy)).clamp(-1.0, 1.0) } else { 1.0 };
    let da: f64 = (0..ng).map(|k| k as f64 * diff_dist[k]).sum();
    let ngf = ng as f64;
    // MCC from the non-symmetric Q over occupied levels
    let occ: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let mcc = if occ.len() < 2 {
        1.0
    } else {
        let q = DMatrix::from_fn(occ.len(), occ.len(), |a, b| {
            let (i, j) = (occ[a], occ[b]);
            (0..ng)
                .filter(|&k| py[k] > 0.0)
                .map(|k| p[(i, k)] * p[(j, k)] / (px[i] * py[k]))
                .sum()
        });
        let mut ev: Vec<f64> = q.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev[1].clamp(0.0, 1.0).sqrt()
    };
    [
        autocorr,
        mux,
        total(&|i, j, v| v * s(i, j).powi(4)),
        total(&|i, j, v| v * s(i, j).powi(3)),
        total(&|i, j, v| v * s(i, j).powi(2)),
        total(&|i, j, v| v * (lv(i) - lv(j)).powi(2)),
        corr,
        da,
        diff_dist.iter().map(|&v| h(v)).sum(),
        (0..ng).map(|k| (k as f64 - da).powi(2) * diff_dist[k]).sum(),
        total(&|_, _, v| v * v),
        hxy,
        if hx.max(hy) > 0.0 { (hxy - hxy1) / hx.max(hy) } else { 0.0 },
        (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).max(0.0).sqrt(),
        total(&|i, j, v| v / (1.0 + (lv(i) - lv(j)).powi(2))),
        mcc,
        total(&|i, j, v| v / (1.0 + (lv(i) - lv(j)).powi(2) / (ngf * ngf))),
        total(&|i, j, v| v / (1.0 + (lv(i) - lv(j)).abs())),
        total(&|i, j, v| v / (1.0 + (lv(i) - lv(j)).abs() / ngf)),
        (1..ng).map(|k| diff_dist[k] / (k * k) as f64).sum(),
        p.iter().cloned().fold(0.0, f64::max),
        (2..=2 * ng).map(|k| k as f64 * sum_dist[k]).sum(),
        sum_dist.iter().map(|&v| h(v)).sum(),
        total(&|i, _, v| v * (lv(i) - mux).powi(2)),
    ]
}

fn dense(m: &SizeMatrix, ng: usize) -> DMatrix<f64> {
    let cols = m.keys().map(|&(_, s)| s as usize).max().unwrap_or(1);
    let mut d = DMatrix::zeros(ng, cols);
    for (&(i, s), &c) in m {
        d[(i as usize - 1, s as usize - 1)] = c as f64;
    }
    d
}

/// GLRLM/GLSZM style features of a dense count matrix (rows = levels,
/// columns = sizes), in catalog order.
pub fn size_feature_oracle(counts: &DMatrix<f64>, np: usize) -> [f64; 16] {
    let nz = counts.sum();
    let p = counts / nz;
    let (ng, ns) = p.shape();
    let i = |r: usize| (r + 1) as f64;
    let j = |c: usize| (c + 1) as f64;
    let sum = |f: &dyn Fn(usize, usize) -> f64| {
        (0..ng).flat_map(|r| (0..ns).map(move |c| (r, c))).map(|(r, c)| f(r, c)).sum::<f64>()
    };
    let mui = sum(&|r, c| p[(r, c)] * i(r));
    let muj = sum(&|r, c| p[(r, c)] * j(c));
    let rows: Vec<f64> = (0..ng).map(|r| counts.row(r).sum()).collect();
    let cols: Vec<f64> = (0..ns).map(|c| counts.column(c).sum()).collect();
    let gln = rows.iter().map(|v| v * v).sum::<f64>();
    let sn = cols.iter().map(|v| v * v).sum::<f64>();
    [
        sum(&|r, c| p[(r, c)] / (j(c) * j(c))),
        sum(&|r, c| p[(r, c)] * j(c) * j(c)),
        gln / nz,
        gln / (nz * nz),
        sn / nz,
        sn / (nz * nz),
        nz / np as f64,
        sum(&|r, c| p[(r, c)] * (i(r) - mui).powi(2)),
        sum(&|r, c| p[(r, c)] * (j(c) - muj).powi(2)),
        sum(&|r, c| h(p[(r, c)])),
        sum(&|r, c| p[(r, c)] / (i(r) * i(r))),
        sum(&|r, c| p[(r, c)] * i(r) * i(r)),
        sum(&|r, c| p[(r, c)] / (i(r) * i(r) * j(c) * j(c))),
        sum(&|r, c| p[(r, c)] * i(r) * i(r) / (j(c) * j(c))),
        sum(&|r, c| p[(r, c)] * j(c) * j(c) / (i(r) * i(r))),
        sum(&|r, c| p[(r, c)] * i(r) * i(r) * j(c) * j(c)),
    ]
}

/// The 14 dependence features, in catalog order.
pub fn gldm_feature_oracle(counts: &DMatrix<f64>) -> [f64; 14] {
    let s = size_feature_oracle(counts, counts.sum() as usize);
    let nz = counts.sum();
    [s[0], s[1], s[2], s[4], s[4] / nz, s[7], s[8], s[9], s[10], s[11], s[12], s[13], s[14], s[15]]
}

pub fn ngtdm_feature_oracle(n: &[u64], s: &[f64]) -> [f64; 5] {
    let nvp: u64 = n.iter().sum();
    if nvp == 0 {
        return [COARSENESS_CAP, 0.0, 0.0, 0.0, 0.0];
    }
    let lv: Vec<usize> = (1..n.len()).filter(|&i| n[i] > 0).collect();
    let p = |i: usize| n[i] as f64 / nvp as f64;
    let ngp = lv.len() as f64;
    let sum_ps: f64 = lv.iter().map(|&i| p(i) * s[i]).sum();
    let sum_s: f64 = lv.iter().map(|&i| s[i]).sum();
    let pairs = || lv.iter().flat_map(|&i| lv.iter().map(move |&j| (i, j)));
    let d2 = |i: usize, j: usize| (i as f64 - j as f64).powi(2);
    let coarse = if sum_ps > 0.0 { (1.0 / sum_ps).min(COARSENESS_CAP) } else { COARSENESS_CAP };
    let contrast = if ngp > 1.0 {
        pairs().map(|(i, j)| p(i) * p(j) * d2(i, j)).sum::<f64>() / (ngp * (ngp - 1.0)) * sum_s / nvp as f64
    } else {
        0.0
    };
    let busy_den: f64 = pairs().map(|(i, j)| (i as f64 * p(i) - j as f64 * p(j)).abs()).sum();
    let busy = if busy_den > 0.0 { sum_ps / busy_den } else { 0.0 };
    let complexity = pairs()
        .map(|(i, j)| (i as f64 - j as f64).abs() * (p(i) * s[i] + p(j) * s[j]) / (p(i) + p(j)))
        .sum::<f64>()
        / nvp as f64;
    let strength = if sum_s > 0.0 { pairs().map(|(i, j)| (p(i) + p(j)) * d2(i, j)).sum::<f64>() / sum_s } else { 0.0 };
    [coarse, contrast, busy, complexity, strength]
}

/// Largest absolute difference; a NaN on either side counts as infinite.
fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x.is_nan() || y.is_nan() { f64::INFINITY } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Matrices against enumeration (exact) and features against the direct
/// formulas, on `cases` random ROIs.
pub fn texture_check(cases: usize, seed: u64) -> Check {
    let start = std::time::Instant::now();
    let mut r = rng(seed);
    let mut matrix_mismatch = 0usize;
    let mut feat_err = 0.0f64;
    let mut worst_case = String::new();
    for case in 0..cases {
        let d = random_roi(&mut r);
        let np = d.voxel_count();
        let mut bump = |e: f64, what: &str| {
            if e > feat_err {
                feat_err = e;
                worst_case = format!("case {case} {what}");
            }
        };
        // GLCM
        let mats = glcm_matrices(&d);
        let mut with_pairs = Vec::new();
        for (m, &dir) in mats.iter().zip(d.directions()) {
            let b = brute_glcm(&d, dir);
            if m.counts != b {
                matrix_mismatch += 1;
            }
            let t: u64 = b.iter().sum();
            if t > 0 {
                with_pairs.push(DMatrix::from_row_slice(d.ng, d.ng, &b.iter().map(|&c| c as f64 / t as f64).collect::<Vec<_>>()));
            }
        }
        match glcm_features(&d) {
            Ok(f) => {
                let mut acc = [0.0; 24];
                for p in &with_pairs {
                    for (a, v) in acc.iter_mut().zip(glcm_feature_oracle(p)) {
                        *a += v / with_pairs.len() as f64;
                    }
                }
                bump(worst(&f, &acc), "glcm");
            }
            Err(_) => {
                if !with_pairs.is_empty() {
                    matrix_mismatch += 1;
                }
            }
        }
        // GLRLM
        let mut acc = [0.0; 16];
        let dirs = d.directions();
        for &dir in dirs {
            let b = brute_runs(&d, dir);
            if glrlm_matrix(&d, dir) != b {
                matrix_mismatch += 1;
            }
            for (a, v) in acc.iter_mut().zip(size_feature_oracle(&dense(&b, d.ng), np)) {
                *a += v / dirs.len() as f64;
            }
        }
        bump(worst(&glrlm_features(&d), &acc), "glrlm");
        // GLSZM
        let z = brute_zones(&d);
        if glszm_matrix(&d) != z {
            matrix_mismatch += 1;
        }
        bump(worst(&glszm_features(&d), &size_feature_oracle(&dense(&z, d.ng), np)), "glszm");
        // GLDM
        let g = brute_dependence(&d);
        if gldm_matrix(&d) != g {
            matrix_mismatch += 1;
        }
        bump(worst(&gldm_features(&d), &gldm_feature_oracle(&dense(&g, d.ng))), "gldm");
        // NGTDM
        let (n, s) = brute_ngtdm(&d);
        let m = ngtdm_matrix(&d);
        if m.n != n || worst(&m.s, &s) > 1e-12 {
            matrix_mismatch += 1;
        }
        bump(worst(&ngtdm_features(&d), &ngtdm_feature_oracle(&n, &s)), "ngtdm");
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        "texture matrices and features vs brute force",
        matrix_mismatch == 0 && feat_err <= 1e-10 && secs < 60.0,
        format!(
            "{cases} ROIs, {matrix_mismatch} matrix mismatches, max feature error {feat_err:.2e} ({worst_case}), {secs:.1}s (tol 1e-10, < 60 s)"
        ),
    )
}

// ------------------------------------------------------- first order, wavelet

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] * (1.0 - (pos - lo as f64)) + sorted[hi] * (pos - lo as f64)
}

pub fn first_order_oracle(x: &[f64], voxel_volume: f64, ng: usize) -> [f64; 18] {
    let n = x.len() as f64;
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = x.iter().sum::<f64>() / n;
    let energy = x.iter().map(|v| v * v).sum::<f64>();
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let mut hist = vec![0.0; ng];
    for &v in x {
        let b = if hi > lo { (((v - lo) / ((hi - lo) / ng as f64)).floor() as usize).min(ng - 1) } else { 0 };
        hist[b] += 1.0 / n;
    }
    let p10 = percentile(&s, 0.1);
    let p90 = percentile(&s, 0.9);
    let robust: Vec<f64> = x.iter().copied().filter(|v| (p10..=p90).contains(v)).collect();
    let rm = robust.iter().sum::<f64>() / robust.len() as f64;
    let central = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let var = central(2);
    [
        energy,
        energy * voxel_volume,
        hist.iter().map(|&p| h(p)).sum(),
        lo,
        p10,
        p90,
        hi,
        mean,
        percentile(&s, 0.5),
        percentile(&s, 0.75) - percentile(&s, 0.25),
        hi - lo,
        x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n,
        if robust.is_empty() { 0.0 } else { robust.iter().map(|v| (v - rm).abs()).sum::<f64>() / robust.len() as f64 },
        (energy / n).sqrt(),
        var,
        var.sqrt(),
        if var > 0.0 { central(3) / var.powf(1.5) } else { 0.0 },
        if var > 0.0 { central(4) / (var * var) } else { 0.0 },
    ]
}

pub fn first_order_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut err = 0.0f64;
    for _ in 0..cases {
        let n = r.random_range(1..=216);
        let ties = r.random_bool(0.3);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = r.random_range(-5.0..5.0);
                if ties { v.round() } else { v }
            })
            .collect();
        let ng = r.random_range(1..=32);
        err = err.max(worst(&first_order_values(&x, 0.7, ng), &first_order_oracle(&x, 0.7, ng)));
    }
    Check::new(
        "first-order features vs direct formulas",
        err <= 1e-10,
        format!("{cases} value sets, max error {err:.2e} (tol 1e-10)"),
    )
}

/// Triple-loop separable Haar convolution with half-sample mirror ends.
pub fn swt3_oracle(v: &ImageVolume) -> Vec<Vec<f64>> {
    let d = v.dims();
    let ext = |i: usize, n: usize| i.min(n - 1);
    BAND_LABELS
        .iter()
        .map(|label| {
            let f: Vec<[f64; 2]> = label.chars().map(|c| if c == 'L' { LOW } else { HIGH }).collect();
            let mut band = vec![0.0; d[0] * d[1] * d[2]];
            for z in 0..d[2] {
                for y in 0..d[1] {
                    for x in 0..d[0] {
                        let mut acc = 0.0;
                        for c in 0..2 {
                            for b in 0..2 {
                                for a in 0..2 {
                                    acc += f[0][a] * f[1][b] * f[2][c] * v.get(ext(x + a, d[0]), ext(y + b, d[1]), ext(z + c, d[2]));
                                }
                            }
                        }
                        band[x + d[0] * (y + d[1] * z)] = acc;
                    }
                }
            }
            band
        })
        .collect()
}

pub fn wavelet_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let g = Geometry::new([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
    let mut err = 0.0f64;
    for _ in 0..cases {
        let v = ImageVolume::new(g, (0..64).map(|_| r.random_range(-100.0..100.0)).collect()).unwrap();
        for (band, o) in swt3(&v).iter().zip(swt3_oracle(&v)) {
            err = err.max(worst(band.image.voxels(), &o));
        }
    }
    // constant input: detail bands vanish, LLL = 2√2·c
    let mut h_nonzero = 0usize;
    let mut lll_rel = 0.0f64;
    for c in [1.0, -3.7, 1234.5] {
        for b in swt3(&ImageVolume::filled(g, c)) {
            for &x in b.image.voxels() {
                if b.label == "LLL" {
                    lll_rel = lll_rel.max(((x - 2.0 * 2f64.sqrt() * c) / c).abs());
                } else if x != 0.0 {
                    h_nonzero += 1;
                }
            }
        }
    }
    // LLL may differ from 2√2·c only by the rounding of the 1/√2 taps
    let passed = err <= 1e-12 && h_nonzero == 0 && lll_rel <= 4.0 * f64::EPSILON;
    Check::new(
        "swt3 vs naive convolution, constant-input bands",
        passed,
        format!(
            "{cases} volumes max error {err:.2e} (tol 1e-12); nonzero detail voxels {h_nonzero}; LLL rel. error {lll_rel:.1e}"
        ),
    )
}

// ------------------------------------------------------------ shape, resample

pub fn ball(r: f64) -> (Vec<u8>, [usize; 3]) {
    let n = (2.0 * r).ceil() as usize + 5;
    let c = (n / 2) as f64;
    let mut m = vec![0u8; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
                if d2 <= r * r {
                    m[x + n * (y + n * z)] = 1;
                }
            }
        }
    }
    (m, [n; 3])
}

pub fn shape_check() -> Check {
    let (m, dims) = ball(10.0);
    let f = shape_3d(&m, dims, [1.0; 3]);
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
    let vol_err = (f[0] - analytic).abs() / analytic;
    let sph = f[4];
    // 20×10×10 box: eigenvalues of the voxel-center covariance are
    // (n² - 1)/12, so elongation = sqrt((10² - 1)/(20² - 1))
    let dims = [24, 14, 14];
    let mut b = vec![0u8; 24 * 14 * 14];
    for z in 2..12 {
        for y in 2..12 {
            for x in 2..22 {
                b[x + 24 * (y + 14 * z)] = 1;
            }
        }
    }
    let fb = shape_3d(&b, dims, [1.0; 3]);
    let closed = (99.0f64 / 399.0).sqrt();
    let el_err = (fb[12] - closed).abs() / closed;
    Check::new(
        "shape: ball volume/sphericity, box elongation",
        vol_err <= 0.05 && (0.95..=1.0).contains(&sph) && el_err <= 0.02,
        format!(
            "ball r=10 volume {:.1} vs {analytic:.1} ({:.2}%), sphericity {sph:.4}; box elongation {:.4} vs {closed:.4} ({:.2}%)",
            f[0],
            vol_err * 100.0,
            fb[12],
            el_err * 100.0
        ),
    )
}

pub fn resample_check(seed: u64) -> Check {
    let mut r = rng(seed);
    let g = Geometry::new([9, 8, 7], [0.8, 0.8, 2.5], [0.0; 3]).unwrap();
    let v = ImageVolume::new(g, (0..g.len()).map(|_| r.random_range(-500.0..500.0)).collect()).unwrap();
    let ident = ResampleSpec::new(2.5, ResampleAxes::All).unwrap();
    let same = Geometry::new([9, 8, 7], [2.5; 3], [0.0; 3]).unwrap();
    let vs = ImageVolume::new(same, v.voxels().to_vec()).unwrap();
    let id_err = worst(resample_volume(&vs, &ident).unwrap().voxels(), vs.voxels());

    // affine ramp along all axes, 48 samples per axis at 2 mm, resampled to
    // 1.25 mm; compared away from the mirror-extended ends
    let n = 48;
    let rg = Geometry::new([n, n, n], [2.0; 3], [0.0; 3]).unwrap();
    let ramp = |x: f64, y: f64, z: f64| 3.0 + 0.5 * x - 1.25 * y + 2.0 * z;
    let rv: Vec<f64> = (0..rg.len())
        .map(|i| {
            let c = rg.coords(i);
            ramp(c[0] as f64 * 2.0, c[1] as f64 * 2.0, c[2] as f64 * 2.0)
        })
        .collect();
    let out = resample_volume(&ImageVolume::new(rg, rv).unwrap(), &ResampleSpec::new(1.25, ResampleAxes::All).unwrap()).unwrap();
    let od = out.dims();
    let margin = 32; // 20 input samples at 2 mm, in 1.25 mm output steps
    let mut ramp_err = 0.0f64;
    for z in margin..od[2] - margin {
        for y in margin..od[1] - margin {
            for x in margin..od[0] - margin {
                let e = ramp(x as f64 * 1.25, y as f64 * 1.25, z as f64 * 1.25);
                ramp_err = ramp_err.max((out.get(x, y, z) - e).abs());
            }
        }
    }
    let c = ImageVolume::filled(g, 42.5);
    let const_err = [1.25, 2.0, 5.0]
        .iter()
        .map(|&s| {
            let o = resample_volume(&c, &ResampleSpec::new(s, ResampleAxes::All).unwrap()).unwrap();
            o.voxels().iter().map(|v| (v - 42.5).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Check::new(
        "resampling: identity, affine ramp, constant",
        id_err <= 1e-9 && ramp_err <= 1e-9 && const_err <= 1e-9,
        format!("identity {id_err:.1e}, ramp (interior) {ramp_err:.1e}, constant {const_err:.1e} (tol 1e-9)"),
    )
}

// ------------------------------------------------------------------ stats

/// Two-sided exact P from the distribution of `U1` over all group
/// assignments, enumerated as bitmasks.
pub fn u_enumerated(pos: &[f64], neg: &[f64]) -> f64 {
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let n = all.len();
    let n1 = pos.len();
    let u_of = |sel: &dyn Fn(usize) -> bool| -> f64 {
        let mut u = 0.0;
        for i in (0..n).filter(|&i| sel(i)) {
            for j in (0..n).filter(|&j| !sel(j)) {
                u += if all[i] > all[j] { 1.0 } else if all[i] == all[j] { 0.5 } else { 0.0 };
            }
        }
        u
    };
    let obs = u_of(&|i| i < n1);
    let (mut le, mut ge, mut tot) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let u = u_of(&|i| mask >> i & 1 == 1);
        tot += 1;
        le += u64::from(u <= obs);
        ge += u64::from(u >= obs);
    }
    (2.0 * le.min(ge) as f64 / tot as f64).min(1.0)
}

/// Two-sided exact P without ties from the classic recursion
/// `f(m, n, u) = f(m - 1, n, u - n) + f(m, n - 1, u)`.
pub fn u_recursion(n1: usize, n2: usize, u1: usize) -> f64 {
    let umax = n1 * n2;
    let mut f = vec![vec![vec![0u128; umax + 1]; n2 + 1]; n1 + 1];
    for m in 0..=n1 {
        for n in 0..=n2 {
            if m == 0 || n == 0 {
                f[m][n][0] = 1;
                continue;
            }
            for u in 0..=m * n {
                let a = if u >= n { f[m - 1][n][u - n] } else { 0 };
                f[m][n][u] = a + f[m][n - 1][u];
            }
        }
    }
    let d = &f[n1][n2];
    let tot: u128 = d.iter().sum();
    let le: u128 = d[..=u1].iter().sum();
    let ge: u128 = d[u1..].iter().sum();
    (2.0 * le.min(ge) as f64 / tot as f64).min(1.0)
}

pub fn utest_check(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut err = 0.0f64;
    let mut pairs = 0;
    for n1 in 1..=EXACT_U_LIMIT {
        for n2 in 1..=EXACT_U_LIMIT / n1 {
            let pos: Vec<f64> = (0..n1).map(|_| r.random::<f64>() + 0.1).collect();
            let neg: Vec<f64> = (0..n2).map(|_| r.random::<f64>()).collect();
            let u1 = pos.iter().map(|a| neg.iter().filter(|&b| a > b).count()).sum::<usize>();
            let got = mann_whitney(&pos, &neg).unwrap();
            err = err.max((got.p - u_recursion(n1, n2, u1)).abs());
            pairs += 1;
        }
    }
    // tied integer data, full enumeration
    let mut tied = 0;
    for _ in 0..300 {
        let n1 = r.random_range(1..=7);
        let n2 = r.random_range(1..=7);
        let pos: Vec<f64> = (0..n1).map(|_| r.random_range(0..5) as f64).collect();
        let neg: Vec<f64> = (0..n2).map(|_| r.random_range(0..4) as f64).collect();
        err = err.max((mann_whitney(&pos, &neg).unwrap().p - u_enumerated(&pos, &neg)).abs());
        tied += 1;
    }
    Check::new(
        "exact U test vs enumeration",
        err <= 1e-12,
        format!("{pairs} group-size pairs with n1·n2 <= {EXACT_U_LIMIT} plus {tied} tied cases, max |ΔP| {err:.1e} (tol 1e-12)"),
    )
}

/// ICC(2,1) from an explicit two-way ANOVA of the n×2 table.
pub fn icc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let k = 2.0;
    let x = [a, b];
    let grand = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / (n * k);
    let row = |i: usize| (a[i] + b[i]) / 2.0;
    let col = |j: usize| x[j].iter().sum::<f64>() / n;
    let ms_r = k * (0..a.len()).map(|i| (row(i) - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let ms_c = n * (0..2).map(|j| (col(j) - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let mut sse = 0.0;
    for i in 0..a.len() {
        for j in 0..2 {
            sse += (x[j][i] - row(i) - col(j) + grand).powi(2);
        }
    }
    let ms_e = sse / ((n - 1.0) * (k - 1.0));
    (ms_r - ms_e) / (ms_r + (k - 1.0) * ms_e + k * (ms_c - ms_e) / n)
}

pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn random_labels(r: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    loop {
        let l: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        if l.iter().any(|&v| v) && l.iter().any(|&v| !v) {
            return l;
        }
    }
}

pub fn auc_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut err = 0.0f64;
    for _ in 0..cases {
        let n = r.random_range(2..=60);
        let labels = random_labels(&mut r, n);
        let ties = r.random_bool(0.5);
        let scores: Vec<f64> = (0..n).map(|_| if ties { r.random_range(0..6) as f64 } else { r.random() }).collect();
        err = err.max((auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());
    }
    Check::new("AUC vs pairwise count", err <= 1e-12, format!("{cases} sets, max error {err:.1e}"))
}

pub fn icc_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut err = 0.0f64;
    for _ in 0..cases {
        let n = r.random_range(3..=40);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let noise = r.random_range(0.0..5.0);
        let b: Vec<f64> = a.iter().map(|v| v + r.random_range(-noise..=noise) + 0.3).collect();
        err = err.max((icc_2_1(&a, &b).unwrap() - icc_oracle(&a, &b).clamp(-1.0, 1.0)).abs());
    }
    Check::new("ICC(2,1) vs ANOVA", err <= 1e-12, format!("{cases} tables, max error {err:.1e}"))
}

pub fn bootstrap_check(datasets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut contains = 0;
    let mut deterministic = true;
    for d in 0..datasets {
        let n = r.random_range(30..=120);
        let labels = random_labels(&mut r, n);
        let shift = r.random_range(0.0..1.5);
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| r.random::<f64>() + if l { shift } else { 0.0 })
            .collect();
        let a = auc(&scores, &labels).unwrap();
        let ci = bootstrap_auc_ci(&scores, &labels, 1000, seed + d as u64).unwrap();
        let again = bootstrap_auc_ci(&scores, &labels, 1000, seed + d as u64).unwrap();
        deterministic &= ci == again;
        if ci.lo <= a && a <= ci.hi {
            contains += 1;
        }
    }
    Check::new(
        "bootstrap CI determinism and coverage of the point AUC",
        deterministic && contains * 50 >= 49 * datasets,
        format!("deterministic {deterministic}, contains point AUC in {contains}/{datasets} (need >= 49/50)"),
    )
}

// --------------------------------------------------------------- selection

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lasso_problem(r: &mut ChaCha8Rng, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.3 + 1.5 * cols[0][i] - 0.8 * cols[1][i] + 0.3 * cols[2 % p][i] + r.random_range(-0.5..0.5))
        .collect();
    (cols, y)
}

/// Optimality conditions of `Σ (y - b - Xw)² + λ|w|₁`, computed from scratch.
pub fn lasso_kkt(cols: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64], b: f64) -> f64 {
    let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - b - cols.iter().zip(w).map(|(c, wj)| c[i] * wj).sum::<f64>()).collect();
    let mut v = resid.iter().sum::<f64>().abs();
    for (c, &wj) in cols.iter().zip(w) {
        let g = 2.0 * dot(c, &resid);
        v = v.max(if wj != 0.0 { (g - lambda * wj.signum()).abs() } else { (g.abs() - lambda).max(0.0) });
    }
    v
}

pub fn lasso_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut kkt = 0.0f64;
    let mut normal_eq = 0.0f64;
    let mut soft = 0.0f64;
    let mut above_max_nonzero = 0;
    for _ in 0..cases {
        let n = r.random_range(20..=60);
        let p = r.random_range(3..=10);
        let (cols, y) = lasso_problem(&mut r, n, p);
        let lmax = lambda_max(&cols, &y);
        if lasso(&cols, &y, lmax * 1.01, None).weights.iter().any(|&w| w != 0.0) {
            above_max_nonzero += 1;
        }
        for ratio in [0.5, 0.1, 0.01] {
            let lambda = lmax * ratio;
            let fit = lasso(&cols, &y, lambda, None);
            kkt = kkt.max(lasso_kkt(&cols, &y, lambda, &fit.weights, fit.intercept));
            // active-set normal equations on centered data:
            // 2 X_Aᵀ (y - X_A w_A) = λ sign(w_A)
            let act: Vec<usize> = (0..p).filter(|&j| fit.weights[j] != 0.0).collect();
            if !act.is_empty() {
                let xc: Vec<Vec<f64>> = act.iter().map(|&j| centered(&cols[j])).collect();
                let yc = centered(&y);
                let g = DMatrix::from_fn(act.len(), act.len(), |a, b| dot(&xc[a], &xc[b]));
                let rhs = DVector::from_fn(act.len(), |a, _| dot(&xc[a], &yc) - lambda / 2.0 * fit.weights[act[a]].signum());
                if let Some(sol) = g.lu().solve(&rhs) {
                    for (a, &j) in act.iter().enumerate() {
                        normal_eq = normal_eq.max((sol[a] - fit.weights[j]).abs());
                    }
                }
            }
        }
        // one column: closed-form soft threshold
        let one = vec![cols[0].clone()];
        let xc = centered(&cols[0]);
        let yc = centered(&y);
        for ratio in [0.9, 0.3, 0.05] {
            let lambda = lambda_max(&one, &y) * ratio;
            let z = 2.0 * dot(&xc, &yc);
            let expect = z.signum() * (z.abs() - lambda).max(0.0) / (2.0 * dot(&xc, &xc));
            soft = soft.max((lasso(&one, &y, lambda, None).weights[0] - expect).abs());
        }
    }
    Check::new(
        "LASSO KKT, normal-equation and soft-threshold oracles",
        kkt <= 1e-4 && normal_eq <= 1e-6 && soft <= 1e-9 && above_max_nonzero == 0,
        format!(
            "{cases} problems: max KKT {kkt:.1e} (tol 1e-4), normal-eq {normal_eq:.1e} (tol 1e-6), soft-threshold {soft:.1e} (tol 1e-9), nonzero above λ_max {above_max_nonzero}"
        ),
    )
}

/// Plug-in MI in nats from joint counts.
pub fn mi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum()
}

pub fn mrmr_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut obj_err = 0.0f64;
    let mut wrong_choice = 0;
    for _ in 0..cases {
        let n = r.random_range(20..=80);
        let labels = random_labels(&mut r, n);
        let base: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l)) + r.random_range(-1.0..1.0)).collect();
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|j| {
                let mix = r.random_range(0.0..1.0);
                (0..n).map(|i| mix * base[i] + (1.0 - mix) * r.random_range(-1.0..1.0) + 0.01 * j as f64).collect()
            })
            .collect();
        let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
        let trace = mrmr(&names, &cols, &labels, 6);
        let bins: Vec<Vec<usize>> = cols.iter().map(|c| equal_frequency_bins(c, MRMR_BINS)).collect();
        let y: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
        let mut chosen: Vec<usize> = Vec::new();
        for step in &trace {
            let eval = |j: usize| {
                let red = if chosen.is_empty() {
                    0.0
                } else {
                    chosen.iter().map(|&s| mi_oracle(&bins[j], &bins[s])).sum::<f64>() / chosen.len() as f64
                };
                mi_oracle(&bins[j], &y) - red
            };
            let j = names.iter().position(|nm| *nm == step.name).unwrap();
            let best = (0..6).filter(|c| !chosen.contains(c)).map(eval).fold(f64::NEG_INFINITY, f64::max);
            obj_err = obj_err.max((eval(j) - step.objective).abs());
            if eval(j) < best - 1e-12 {
                wrong_choice += 1;
            }
            chosen.push(j);
        }
    }
    Check::new(
        "mRMR trace vs re-evaluated objective",
        obj_err <= 1e-12 && wrong_choice == 0,
        format!("{cases} six-feature instances, {wrong_choice} non-maximal picks, max objective error {obj_err:.1e}"),
    )
}

pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (ac, bc) = (centered(a), centered(b));
    dot(&ac, &bc) / (dot(&ac, &ac) * dot(&bc, &bc)).sqrt()
}

pub fn decorrelation_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst_r = 0.0f64;
    let mut survivors = 0;
    for _ in 0..cases {
        let n = 40;
        let p = 12;
        let base: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let noise = [0.01, 0.1, 0.5][j % 3];
                base[j % 3].iter().map(|v| v + r.random_range(-noise..noise)).collect()
            })
            .collect();
        let names: Vec<String> = (0..p).map(|j| format!("f{j:02}")).collect();
        let pv: Vec<f64> = (0..p).map(|_| r.random()).collect();
        let kept: Vec<usize> = stage_decorrelate(&names, &cols, &pv, 0.95)
            .unwrap()
            .iter()
            .filter(|e| e.kept)
            .map(|e| names.iter().position(|n| *n == e.name).unwrap())
            .collect();
        survivors += kept.len();
        for a in 0..kept.len() {
            for b in a + 1..kept.len() {
                worst_r = worst_r.max(pearson_oracle(&cols[kept[a]], &cols[kept[b]]).abs());
            }
        }
    }
    Check::new(
        "decorrelation survivors pairwise |r| <= 0.95",
        worst_r <= 0.95,
        format!("{cases} sets, {survivors} survivors, max pairwise |r| {worst_r:.4}"),
    )
}

// ----------------------------------------------------------------- SVM

/// Exact dual optimum of a small RBF SVM by trying every assignment of each
/// multiplier to {0, free, C} and keeping the best feasible stationary point.
pub fn svm_qp_oracle(x: &[Vec<f64>], y: &[bool], c: f64, gamma: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let q = DMatrix::from_fn(n, n, |i, j| {
        ys[i] * ys[j] * (-gamma * x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).exp()
    });
    let dual = |a: &[f64]| a.iter().sum::<f64>() - 0.5 * (0..n).map(|i| (0..n).map(|j| a[i] * q[(i, j)] * a[j]).sum::<f64>()).sum::<f64>();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut a: Vec<f64> = state.iter().map(|&s| if s == 2 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            // [Q_FF  y_F; y_Fᵀ 0] [α_F; b] = [1 - Q_F,bound α_bound; -y_boundᵀ α_bound]
            let f = free.len();
            let mut m = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r_, &i) in free.iter().enumerate() {
                for (c_, &j) in free.iter().enumerate() {
                    m[(r_, c_)] = q[(i, j)];
                }
                m[(r_, f)] = ys[i];
                m[(f, r_)] = ys[i];
                rhs[r_] = 1.0 - (0..n).filter(|&j| state[j] == 2).map(|j| q[(i, j)] * c).sum::<f64>();
            }
            rhs[f] = -(0..n).filter(|&j| state[j] == 2).map(|j| ys[j] * c).sum::<f64>();
            let Some(sol) = m.lu().solve(&rhs) else { continue };
            for (r_, &i) in free.iter().enumerate() {
                a[i] = sol[r_];
            }
        }
        let feasible = a.iter().all(|&v| (-1e-12..=c + 1e-12).contains(&v))
            && a.iter().zip(&ys).map(|(v, s)| v * s).sum::<f64>().abs() < 1e-9;
        if !feasible {
            continue;
        }
        let d = dual(&a);
        if best.as_ref().is_none_or(|(_, bd)| d > *bd) {
            best = Some((a, d));
        }
    }
    best.expect("the zero vector is always feasible")
}

pub fn svm_check(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut obj_gap = 0.0f64;
    let mut alpha_err = 0.0f64;
    for _ in 0..cases {
        let x: Vec<Vec<f64>> = (0..6).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
        let mut y: Vec<bool> = (0..6).map(|i| x[i][0] * x[i][1] > 0.0).collect();
        y[0] = true;
        y[1] = false;
        let c = [0.5, 1.0, 10.0][r.random_range(0..3)];
        let gamma = [0.2, 0.5, 2.0][r.random_range(0..3)];
        let (a_opt, d_opt) = svm_qp_oracle(&x, &y, c, gamma);
        let got = svm_rbf_dual(&x, &y, c, gamma).unwrap();
        obj_gap = obj_gap.max((got.fit.dual_objective - d_opt).abs() / d_opt.abs().max(1.0));
        alpha_err = alpha_err.max(worst(&got.alpha, &a_opt) / c);
    }
    Check::new(
        "SMO dual vs enumerated 6-point QP",
        obj_gap <= 1e-3 && alpha_err <= 1e-2,
        format!("{cases} problems, max relative dual-objective gap {obj_gap:.1e} (tol 1e-3), max |Δα|/C {alpha_err:.1e} (tol 1e-2)"),
    )
}
