//! Synthetic CT cohorts with a planted, texture-borne label signal.
//!
//! Each patient has three independent standard-normal latents, one per task.
//! The lesion's noise correlation length follows the LNM latent, its texture
//! amplitude the LVI latent and its mean attenuation the pT4 latent. A task
//! label is `[s·z + √(1 - s²)·e > 0]` with `e` fresh noise and `s` the task's
//! signal strength, so `s = 0` makes the label independent of the image.
//!
//! The correlated field is built on a fine grid (in-plane spacing, slices
//! subdivided to at most the in-plane spacing) and averaged over each slice's
//! thickness, so thick slices show the partial-volume blur of real scanners.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{
    write_mask, write_volume, Cohort, CohortManifest, ElementType, Encoding, Geometry, ImageVolume,
    ManifestRow, MaskKind, RoiMask, Task,
};
use crate::rng::stream_rng;
use crate::stats::auc;

/// Latents are clipped to this many standard deviations.
const LATENT_CLIP: f64 = 2.5;
/// Free voxels kept around the lesion bounding box, in-plane and in z.
const MARGIN_XY: usize = 10;
const MARGIN_Z: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub n_patients: usize,
    pub seed: u64,
    pub in_plane_spacing: f64,
    pub slice_thicknesses: Vec<f64>,
    /// In-plane lesion semi-axis range, voxels.
    pub lesion_radius: (f64, f64),
    /// Correlation length `base · exp(slope · z_lnm)`, mm.
    pub corr_length_mm: f64,
    pub corr_log_slope: f64,
    /// Texture amplitude `base · exp(slope · z_lvi)`, HU.
    pub amplitude_hu: f64,
    pub amplitude_log_slope: f64,
    /// Lesion mean `base + slope · z_pt4`, HU.
    pub lesion_mean_hu: f64,
    pub lesion_mean_slope_hu: f64,
    pub background_hu: f64,
    pub background_noise_hu: f64,
    /// Signal strength per task in `[lnm, lvi, pt4]` order.
    pub signal: [f64; 3],
    /// Chance that a boundary voxel flips in the second-session mask.
    pub morph_probability: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            n_patients: 200,
            seed: 20240917,
            in_plane_spacing: 0.8,
            slice_thicknesses: vec![1.25, 5.0],
            lesion_radius: (12.0, 20.0),
            corr_length_mm: 1.5,
            corr_log_slope: 0.45,
            amplitude_hu: 25.0,
            amplitude_log_slope: 0.3,
            lesion_mean_hu: 60.0,
            lesion_mean_slope_hu: 10.0,
            background_hu: 40.0,
            background_noise_hu: 12.0,
            signal: [0.8, 0.8, 0.8],
            morph_probability: 0.25,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 20 {
            return Err(Error::InvalidInput("a phantom cohort needs at least 20 patients".into()));
        }
        if self.signal.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput("signal strengths must lie in [0, 1]".into()));
        }
        if self.slice_thicknesses.is_empty() || self.slice_thicknesses.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidInput("slice thickness pool must be nonempty and positive".into()));
        }
        if !(self.in_plane_spacing > 0.0) {
            return Err(Error::InvalidInput("in-plane spacing must be positive".into()));
        }
        let (lo, hi) = self.lesion_radius;
        if !(lo >= 2.0 && hi >= lo) {
            return Err(Error::InvalidInput("lesion radius range must satisfy 2 <= min <= max".into()));
        }
        if !(0.0..1.0).contains(&self.morph_probability) {
            return Err(Error::InvalidInput("morph probability must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Hidden generative parameters of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub patient_id: String,
    pub latent_lnm: f64,
    pub latent_lvi: f64,
    pub latent_pt4: f64,
    pub corr_length_mm: f64,
    pub amplitude_hu: f64,
    pub mean_hu: f64,
    pub slice_thickness: f64,
}

impl OracleRow {
    pub fn latent(&self, task: Task) -> f64 {
        match task {
            Task::Lnm => self.latent_lnm,
            Task::Lvi => self.latent_lvi,
            Task::Pt4 => self.latent_pt4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPatient {
    pub id: String,
    pub volume: ImageVolume,
    pub mask_s1: RoiMask,
    pub mask_s2: RoiMask,
    pub labels: [u8; 3],
    pub oracle: OracleRow,
}

pub fn patient_id(index: usize) -> String {
    format!("P{:04}", index + 1)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma < 1e-3 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-mode convolution along `axis`: the output is shorter by
/// `kernel.len() - 1` on that axis.
fn blur_axis(src: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = dims[axis] + 1 - kernel.len();
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let mut out = Vec::with_capacity(od[0] * od[1] * od[2]);
    for z in 0..od[2] {
        for y in 0..od[1] {
            for x in 0..od[0] {
                let base = x + dims[0] * (y + dims[1] * z);
                out.push(kernel.iter().enumerate().map(|(t, w)| w * src[base + t * stride]).sum());
            }
        }
    }
    (out, od)
}

/// Unit-variance Gaussian random field with correlation length `ell` (mm)
/// on a grid with `spacing`. Noise is drawn on a padded grid so the blur
/// never sees an edge.
fn correlated_field(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f64; 3], ell: f64) -> Vec<f64> {
    let kernels: Vec<Vec<f64>> = (0..3).map(|a| gaussian_kernel(ell / spacing[a])).collect();
    let mut d = [0; 3];
    for a in 0..3 {
        d[a] = dims[a] + kernels[a].len() - 1;
    }
    let mut f: Vec<f64> = (0..d[0] * d[1] * d[2]).map(|_| normal(rng)).collect();
    let mut gain = 1.0;
    for (a, k) in kernels.iter().enumerate() {
        gain *= k.iter().map(|w| w * w).sum::<f64>();
        (f, d) = blur_axis(&f, d, a, k);
    }
    debug_assert_eq!(d, dims);
    let g = gain.sqrt();
    f.iter_mut().for_each(|v| *v /= g);
    f
}

/// Average groups of `m` fine slices into one.
fn average_slices(fine: &[f64], dims: [usize; 3], m: usize) -> Vec<f64> {
    let plane = dims[0] * dims[1];
    let nz = dims[2] / m;
    let mut out = vec![0.0; plane * nz];
    for z in 0..nz {
        for s in 0..m {
            let src = &fine[(z * m + s) * plane..(z * m + s + 1) * plane];
            for (o, v) in out[z * plane..(z + 1) * plane].iter_mut().zip(src) {
                *o += v / m as f64;
            }
        }
    }
    out
}

fn dice(a: &[u8], b: &[u8]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x != 0 && **y != 0).count() as f64;
    let total = (a.iter().filter(|&&x| x != 0).count() + b.iter().filter(|&&x| x != 0).count()) as f64;
    2.0 * inter / total
}

/// Flip in-plane boundary voxels (inner and outer shell) with probability `p`.
fn morph_boundary(mask: &[u8], dims: [usize; 3], p: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let at = |x: isize, y: isize, z: usize| -> u8 {
        if x < 0 || y < 0 || x >= dims[0] as isize || y >= dims[1] as isize {
            0
        } else {
            mask[x as usize + dims[0] * (y as usize + dims[1] * z)]
        }
    };
    let mut out = mask.to_vec();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let v = at(x as isize, y as isize, z);
                let (xi, yi) = (x as isize, y as isize);
                let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| at(xi + dx, yi + dy, z) != v);
                // only touch slices that carry lesion voxels
                let u: f64 = rng.random();
                if edge && u < p {
                    let slice_has = (0..dims[0] * dims[1]).any(|i| mask[z * dims[0] * dims[1] + i] != 0);
                    if slice_has {
                        out[x + dims[0] * (y + dims[1] * z)] = 1 - v;
                    }
                }
            }
        }
    }
    out
}

/// Generate one patient from its own random stream.
pub fn generate_patient(spec: &PhantomSpec, index: usize) -> Result<PhantomPatient> {
    let mut rng = stream_rng(spec.seed, index as u64);
    let id = patient_id(index);
    let latent: [f64; 3] = [0; 3].map(|_| normal(&mut rng).clamp(-LATENT_CLIP, LATENT_CLIP));
    let labels: [u8; 3] = [0, 1, 2].map(|t| {
        let s = spec.signal[t];
        let e = normal(&mut rng);
        u8::from(s * latent[t] + (1.0 - s * s).sqrt() * e > 0.0)
    });
    let thickness = spec.slice_thicknesses[rng.random_range(0..spec.slice_thicknesses.len())];
    let sp = spec.in_plane_spacing;
    let (rlo, rhi) = spec.lesion_radius;
    let ra = rng.random_range(rlo..=rhi);
    let rb = ra * rng.random_range(0.8..1.2);
    let rc_mm = ra * sp * rng.random_range(0.7..1.1);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);

    let half_xy = ra.max(rb).ceil() as usize + 1;
    let half_z = (rc_mm / thickness).ceil() as usize + 1;
    let dims = [
        2 * (half_xy + MARGIN_XY) + 1,
        2 * (half_xy + MARGIN_XY) + 1,
        2 * (half_z + MARGIN_Z) + 1,
    ];
    let geometry = Geometry::new(dims, [sp, sp, thickness], [0.0; 3])?;
    let c = [(dims[0] / 2) as f64, (dims[1] / 2) as f64, (dims[2] / 2) as f64];
    let (ct, st) = (theta.cos(), theta.sin());
    let mut mask = vec![0u8; geometry.len()];
    for z in 0..dims[2] {
        let dz = (z as f64 - c[2]) * thickness / rc_mm;
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let (px, py) = (x as f64 - c[0], y as f64 - c[1]);
                let u = (ct * px + st * py) / ra;
                let v = (-st * px + ct * py) / rb;
                if u * u + v * v + dz * dz <= 1.0 {
                    mask[geometry.index(x, y, z)] = 1;
                }
            }
        }
    }

    let corr = spec.corr_length_mm * (spec.corr_log_slope * latent[0]).exp();
    let amp = spec.amplitude_hu * (spec.amplitude_log_slope * latent[1]).exp();
    let mean = spec.lesion_mean_hu + spec.lesion_mean_slope_hu * latent[2];

    let m = (thickness / sp).ceil().max(1.0) as usize;
    let fine_dims = [dims[0], dims[1], dims[2] * m];
    let fine_sp = [sp, sp, thickness / m as f64];
    let lesion = average_slices(&correlated_field(&mut rng, fine_dims, fine_sp, corr), fine_dims, m);
    let background = average_slices(&correlated_field(&mut rng, fine_dims, fine_sp, sp), fine_dims, m);
    let voxels: Vec<f64> = (0..geometry.len())
        .map(|i| {
            let v = if mask[i] != 0 {
                mean + amp * lesion[i]
            } else {
                spec.background_hu + spec.background_noise_hu * background[i]
            };
            v.round()
        })
        .collect();

    let mut s2 = morph_boundary(&mask, dims, spec.morph_probability, &mut rng);
    if !s2.iter().any(|&v| v != 0) || dice(&mask, &s2) <= 0.7 {
        s2 = mask.clone();
    }
    let oracle = OracleRow {
        patient_id: id.clone(),
        latent_lnm: latent[0],
        latent_lvi: latent[1],
        latent_pt4: latent[2],
        corr_length_mm: corr,
        amplitude_hu: amp,
        mean_hu: mean,
        slice_thickness: thickness,
    };
    Ok(PhantomPatient {
        id,
        volume: ImageVolume::new(geometry, voxels)?,
        mask_s1: RoiMask::new(geometry, mask, MaskKind::Mask3D)?,
        mask_s2: RoiMask::new(geometry, s2, MaskKind::Mask3D)?,
        labels,
        oracle,
    })
}

/// Dice overlap between two masks on the same grid.
pub fn mask_dice(a: &RoiMask, b: &RoiMask) -> f64 {
    dice(a.voxels(), b.voxels())
}

pub const ORACLE_FILE: &str = "oracle.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Write a cohort under `out`: `cohort/<id>_img.nrrd`, two mask sessions,
/// `manifest.csv` and the `oracle.csv` sidecar.
pub fn generate(spec: &PhantomSpec, out: &Path) -> Result<CohortManifest> {
    spec.validate()?;
    let dir = out.join("cohort");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let patients: Vec<(ManifestRow, ManifestRow, OracleRow)> = (0..spec.n_patients)
        .into_par_iter()
        .map(|i| {
            let p = generate_patient(spec, i)?;
            let img = PathBuf::from("cohort").join(format!("{}_img.nrrd", p.id));
            let m1 = PathBuf::from("cohort").join(format!("{}_mask_s1.nrrd", p.id));
            let m2 = PathBuf::from("cohort").join(format!("{}_mask_s2.nrrd", p.id));
            write_volume(out.join(&img), &p.volume, ElementType::Int16, Encoding::Gzip)?;
            write_mask(out.join(&m1), &p.mask_s1, Encoding::Gzip)?;
            write_mask(out.join(&m2), &p.mask_s2, Encoding::Gzip)?;
            let labels = p.labels.map(Some);
            let row = |mask: PathBuf, session: u32| ManifestRow {
                patient_id: p.id.clone(),
                volume: img.clone(),
                mask,
                labels,
                cohort: Cohort::Unassigned,
                session,
            };
            Ok((row(m1, 1), row(m2, 2), p.oracle))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(2 * patients.len());
    let mut oracle = csv::Writer::from_path(out.join(ORACLE_FILE))?;
    for (r1, r2, o) in patients {
        rows.push(r1);
        rows.push(r2);
        oracle.serialize(o)?;
    }
    oracle.flush().map_err(|e| Error::io(out.join(ORACLE_FILE), e))?;
    let manifest = CohortManifest::new(out, rows)?;
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn read_oracle(dir: &Path) -> Result<Vec<OracleRow>> {
    let path = dir.join(ORACLE_FILE);
    if !path.exists() {
        return Err(Error::Io {
            path: path.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "oracle sidecar missing"),
        });
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// AUC of each task's hidden latent against its session-1 labels.
pub fn oracle_auc(dir: &Path) -> Result<[f64; 3]> {
    let oracle = read_oracle(dir)?;
    let manifest = CohortManifest::load(dir.join(MANIFEST_FILE))?;
    let rows = manifest.session(1);
    let mut out = [0.0; 3];
    for task in Task::ALL {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for o in &oracle {
            if let Some(r) = rows.iter().find(|r| r.patient_id == o.patient_id) {
                if let Some(l) = r.label(task) {
                    scores.push(o.latent(task));
                    labels.push(l == 1);
                }
            }
        }
        out[task.index()] = auc(&scores, &labels)?;
    }
    Ok(out)
}
