//! Volume and mask data model, NRRD subset I/O, cohort manifests and the
//! derivation of single-slice ROIs from whole-lesion annotations.

mod manifest;
mod nrrd;

pub use manifest::{Cohort, CohortManifest, ManifestRow, Task};
pub use nrrd::{read_mask, read_nrrd, write_mask, write_nrrd, write_volume, ElementType, Encoding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid geometry shared by volumes and masks. Voxels are stored x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry(format!(
                "spacing must be finite and positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Sub-grid `[lo, hi)` per axis with the origin moved accordingly.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Geometry {
        let mut dims = [0; 3];
        let mut origin = self.origin;
        for a in 0..3 {
            dims[a] = hi[a] - lo[a];
            origin[a] += lo[a] as f64 * self.spacing[a];
        }
        Geometry {
            dims,
            spacing: self.spacing,
            origin,
        }
    }
}

/// 3D scalar grid in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    geometry: Geometry,
    voxels: Vec<f64>,
}

impl ImageVolume {
    pub fn new(geometry: Geometry, voxels: Vec<f64>) -> Result<Self> {
        if voxels.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                geometry.dims
            )));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite voxel at index {i}")));
        }
        Ok(ImageVolume { geometry, voxels })
    }

    pub fn filled(geometry: Geometry, value: f64) -> Self {
        ImageVolume {
            voxels: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.geometry.origin
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f64] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<f64> {
        self.voxels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.geometry.index(x, y, z)]
    }

    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> ImageVolume {
        let geometry = self.geometry.crop(lo, hi);
        let voxels = crop_slice(&self.voxels, &self.geometry, lo, hi);
        ImageVolume { geometry, voxels }
    }
}

/// How a mask was derived from the annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    Mask3D,
    /// Single-slice ROI; nonzero voxels only on this z index.
    Mask2D(usize),
}

/// Binary ROI aligned to an [`ImageVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    geometry: Geometry,
    voxels: Vec<u8>,
    kind: MaskKind,
}

impl RoiMask {
    /// Any nonzero input value is stored as 1.
    pub fn new(geometry: Geometry, voxels: Vec<u8>, kind: MaskKind) -> Result<Self> {
        if voxels.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "mask voxel count {} does not match dims {:?}",
                voxels.len(),
                geometry.dims
            )));
        }
        let voxels: Vec<u8> = voxels.into_iter().map(|v| u8::from(v != 0)).collect();
        if !voxels.iter().any(|&v| v != 0) {
            return Err(Error::EmptyMask);
        }
        if let MaskKind::Mask2D(k) = kind {
            if k >= geometry.dims[2] {
                return Err(Error::Geometry(format!(
                    "slice index {k} outside {} slices",
                    geometry.dims[2]
                )));
            }
            let plane = geometry.dims[0] * geometry.dims[1];
            let off_slice = voxels
                .iter()
                .enumerate()
                .any(|(i, &v)| v != 0 && i / plane != k);
            if off_slice {
                return Err(Error::Geometry(format!(
                    "Mask2D({k}) has voxels outside its slice"
                )));
            }
        }
        Ok(RoiMask {
            geometry,
            voxels,
            kind,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[self.geometry.index(x, y, z)] != 0
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    /// Nonzero voxels per z slice.
    pub fn slice_counts(&self) -> Vec<usize> {
        let plane = self.geometry.dims[0] * self.geometry.dims[1];
        self.voxels
            .chunks(plane)
            .map(|s| s.iter().filter(|&&v| v != 0).count())
            .collect()
    }

    /// Inclusive-exclusive bounding box `[lo, hi)` of the nonzero voxels.
    pub fn bounding_box(&self) -> ([usize; 3], [usize; 3]) {
        let mut lo = self.geometry.dims;
        let mut hi = [0usize; 3];
        for (i, &v) in self.voxels.iter().enumerate() {
            if v != 0 {
                let c = self.geometry.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a] + 1);
                }
            }
        }
        (lo, hi)
    }

    /// Crop keeping the mask kind consistent with the new z offset.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<RoiMask> {
        let geometry = self.geometry.crop(lo, hi);
        let voxels = crop_slice(&self.voxels, &self.geometry, lo, hi);
        let kind = match self.kind {
            MaskKind::Mask3D => MaskKind::Mask3D,
            MaskKind::Mask2D(k) => {
                if k < lo[2] || k >= hi[2] {
                    return Err(Error::EmptyMask);
                }
                MaskKind::Mask2D(k - lo[2])
            }
        };
        RoiMask::new(geometry, voxels, kind)
    }

    /// Re-tag a mask (e.g. a single-slice 3D mask viewed as 2D).
    pub fn with_kind(self, kind: MaskKind) -> Result<RoiMask> {
        RoiMask::new(self.geometry, self.voxels, kind)
    }
}

fn crop_slice<T: Copy>(src: &[T], g: &Geometry, lo: [usize; 3], hi: [usize; 3]) -> Vec<T> {
    let mut out = Vec::with_capacity((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            let start = g.index(lo[0], y, z);
            out.extend_from_slice(&src[start..start + hi[0] - lo[0]]);
        }
    }
    out
}

/// z index with the largest in-slice voxel count; ties go to the lowest index.
pub fn largest_area_slice(mask: &RoiMask) -> Result<usize> {
    let counts = mask.slice_counts();
    let mut best: Option<(usize, usize)> = None;
    for (z, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
            best = Some((z, c));
        }
    }
    best.map(|(z, _)| z).ok_or(Error::EmptyMask)
}

/// Keep only the largest-area slice of a 3D annotation.
pub fn to_2d_roi(mask: &RoiMask) -> Result<RoiMask> {
    let k = largest_area_slice(mask)?;
    let plane = mask.geometry.dims[0] * mask.geometry.dims[1];
    let voxels = mask
        .voxels
        .iter()
        .enumerate()
        .map(|(i, &v)| if i / plane == k { v } else { 0 })
        .collect();
    RoiMask::new(mask.geometry, voxels, MaskKind::Mask2D(k))
}
