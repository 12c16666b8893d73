//! Feature catalog and extraction for the three ROI modalities.
//!
//! Every image (original plus the eight wavelet bands) contributes 93 values:
//! first-order, GLCM, GLRLM, GLSZM, GLDM and NGTDM. Shape is computed once on
//! the original mask, giving `14 + 9 * 93 = 851` named features.

pub mod discretize;
pub mod firstorder;
pub mod glcm;
pub mod ngtdm;
pub mod shape;
pub mod zones;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{ImageVolume, MaskKind, RoiMask};
use crate::wavelet::{swt3, BAND_LABELS};
use discretize::{discretize_grid, slice_of, DiscretizedRoi, RoiMode};

pub const DEFAULT_BIN_COUNT: usize = 32;
pub const PER_IMAGE: usize = 93;
pub const CATALOG_LEN: usize = 14 + 9 * PER_IMAGE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "2D")]
    M2D,
    #[serde(rename = "2.5D")]
    M2_5D,
    #[serde(rename = "3D")]
    M3D,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::M2D, Modality::M2_5D, Modality::M3D];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::M2D => "2D",
            Modality::M2_5D => "2.5D",
            Modality::M3D => "3D",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2D" => Ok(Modality::M2D),
            "2.5D" => Ok(Modality::M2_5D),
            "3D" => Ok(Modality::M3D),
            _ => Err(Error::InvalidInput(format!("unknown modality {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub bin_count: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            bin_count: DEFAULT_BIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub modality: Modality,
    /// Aligned with [`catalog`].
    pub values: Vec<f64>,
    pub extraction_seconds: f64,
}

fn filters() -> impl Iterator<Item = String> {
    std::iter::once("original".to_string()).chain(BAND_LABELS.iter().map(|b| format!("wavelet-{b}")))
}

/// The 851 `filter_class_name` feature names in vector order.
pub fn catalog() -> Vec<String> {
    let mut out: Vec<String> = shape::NAMES.iter().map(|n| format!("original_shape_{n}")).collect();
    for f in filters() {
        let classes: [(&str, &[&str]); 6] = [
            ("firstorder", &firstorder::NAMES),
            ("glcm", &glcm::NAMES),
            ("glrlm", &zones::GLRLM_NAMES),
            ("glszm", &zones::GLSZM_NAMES),
            ("gldm", &zones::GLDM_NAMES),
            ("ngtdm", &ngtdm::NAMES),
        ];
        for (class, names) in classes {
            out.extend(names.iter().map(|n| format!("{f}_{class}_{n}")));
        }
    }
    out
}

/// The 93 intensity and texture values of one filtered image on one ROI.
fn image_block(values: &[f64], mask: &[u8], dims: [usize; 3], mode: RoiMode, voxel_volume: f64, ng: usize) -> Vec<f64> {
    let inside: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m != 0).map(|(&v, _)| v).collect();
    let d: DiscretizedRoi = discretize_grid(values, mask, dims, ng, mode);
    let mut out = Vec::with_capacity(PER_IMAGE);
    out.extend(firstorder::first_order_values(&inside, voxel_volume, ng));
    out.extend(glcm::glcm_features(&d).unwrap_or_else(|_| glcm::flat_features()));
    out.extend(zones::glrlm_features(&d));
    out.extend(zones::glszm_features(&d));
    out.extend(zones::gldm_features(&d));
    out.extend(ngtdm::ngtdm_features(&d));
    out
}

/// Catalog values for a (cropped) volume and mask on the same grid.
fn vector_3d(v: &ImageVolume, m: &RoiMask, ng: usize) -> Vec<f64> {
    let dims = v.dims();
    let vv = v.geometry().voxel_volume();
    let mut out = shape::shape_3d(m.voxels(), dims, v.spacing()).to_vec();
    out.extend(image_block(v.voxels(), m.voxels(), dims, RoiMode::Volumetric, vv, ng));
    for band in swt3(v) {
        out.extend(image_block(band.image.voxels(), m.voxels(), dims, RoiMode::Volumetric, vv, ng));
    }
    out
}

/// Planar catalog for slice `k`. The filter bank still runs in 3D: the volume
/// is cut to slices `k` and `k + 1`, which is all a one-sided Haar tap needs.
fn vector_2d(v: &ImageVolume, m: &RoiMask, k: usize, ng: usize) -> Vec<f64> {
    let dims = v.dims();
    let hi = (k + 2).min(dims[2]);
    let sub = v.crop([0, 0, k], [dims[0], dims[1], hi]);
    let sdims = sub.dims();
    let plane_dims = [dims[0], dims[1], 1];
    let mask = slice_of(m.voxels(), dims, k);
    let sp = v.spacing();
    let pixel_area = sp[0] * sp[1];
    let mode = RoiMode::Planar(k);
    let mut out = shape::shape_2d(&mask, [dims[0], dims[1]], [sp[0], sp[1]]).to_vec();
    out.extend(image_block(&slice_of(sub.voxels(), sdims, 0), &mask, plane_dims, mode, pixel_area, ng));
    for band in swt3(&sub) {
        out.extend(image_block(&slice_of(band.image.voxels(), sdims, 0), &mask, plane_dims, mode, pixel_area, ng));
    }
    out
}

fn sanitize(values: &mut [f64]) {
    for (j, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            log::warn!("non-finite {} ({v}) replaced by 0", catalog()[j]);
            *v = 0.0;
        }
    }
}

/// Extract the full catalog for one ROI.
///
/// `M2D` needs a single-slice mask, `M3D` and `M2_5D` a volumetric one. The
/// volume is first cropped to the mask bounding box plus a one-voxel margin;
/// the margin keeps wavelet responses inside the ROI identical to those of
/// the uncropped volume.
pub fn extract(v: &ImageVolume, m: &RoiMask, modality: Modality, cfg: &ExtractConfig) -> Result<FeatureVector> {
    if v.geometry() != m.geometry() {
        return Err(Error::Geometry("volume and mask grids differ".into()));
    }
    if cfg.bin_count == 0 {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    let start = Instant::now();
    let (v, m) = crate::resample::crop_to_roi(v, m, 1)?;
    let ng = cfg.bin_count;
    let mut values = match (modality, m.kind()) {
        (Modality::M3D, MaskKind::Mask3D) => vector_3d(&v, &m, ng),
        (Modality::M2D, MaskKind::Mask2D(k)) => vector_2d(&v, &m, k, ng),
        (Modality::M2_5D, MaskKind::Mask3D) => {
            let slices: Vec<usize> = m
                .slice_counts()
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(z, _)| z)
                .collect();
            let mut acc = vec![0.0; CATALOG_LEN];
            for &k in &slices {
                for (a, x) in acc.iter_mut().zip(vector_2d(&v, &m, k, ng)) {
                    *a += x;
                }
            }
            acc.iter_mut().for_each(|a| *a /= slices.len() as f64);
            acc
        }
        (modality, kind) => {
            return Err(Error::InvalidInput(format!("{modality} extraction cannot use a {kind:?} mask")));
        }
    };
    debug_assert_eq!(values.len(), CATALOG_LEN);
    sanitize(&mut values);
    Ok(FeatureVector {
        modality,
        values,
        extraction_seconds: start.elapsed().as_secs_f64(),
    })
}
