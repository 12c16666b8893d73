use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{ImageVolume, MaskKind, RoiMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoiMode {
    /// One z slice of the source grid, 2D neighborhoods.
    Planar(usize),
    Volumetric,
}

/// Gray levels `1..=ng` inside the ROI, 0 outside.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    pub dims: [usize; 3],
    pub levels: Vec<u16>,
    pub ng: usize,
    pub mode: RoiMode,
}

/// 13 unique volumetric directions at Chebyshev distance 1.
pub const DIRECTIONS_3D: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// 4 unique in-plane directions.
pub const DIRECTIONS_2D: [[isize; 3]; 4] = [[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]];

impl DiscretizedRoi {
    pub fn directions(&self) -> &'static [[isize; 3]] {
        match self.mode {
            RoiMode::Planar(_) => &DIRECTIONS_2D,
            RoiMode::Volumetric => &DIRECTIONS_3D,
        }
    }

    /// All 26 (or 8 planar) neighbor offsets.
    pub fn neighborhood(&self) -> Vec<[isize; 3]> {
        self.directions()
            .iter()
            .flat_map(|d| [*d, [-d[0], -d[1], -d[2]]])
            .collect()
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

    /// Index of `idx + off` if it lies on the grid.
    #[inline]
    pub fn step(&self, idx: usize, off: [isize; 3]) -> Option<usize> {
        let c = self.coords(idx);
        let mut n = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + off[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            n[a] = v as usize;
        }
        Some(self.index(n[0], n[1], n[2]))
    }

    /// Level at `idx + off`, 0 when off-grid or outside the ROI.
    #[inline]
    pub fn level_at(&self, idx: usize, off: [isize; 3]) -> u16 {
        self.step(idx, off).map_or(0, |j| self.levels[j])
    }

    pub fn voxel_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

/// Fixed-bin-count discretization relative to the ROI range:
/// `min(ng, floor((x - min) / ((max - min) / ng)) + 1)`; constant ROIs map to 1.
pub fn discretize_values(values: &[f64], ng: usize) -> Vec<u16> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![1; values.len()];
    }
    let width = (hi - lo) / ng as f64;
    values
        .iter()
        .map(|&v| {
            let b = ((v - lo) / width).floor() as usize + 1;
            b.min(ng) as u16
        })
        .collect()
}

/// Discretize values on a grid restricted to `mask` (nonzero = inside).
pub(crate) fn discretize_grid(
    values: &[f64],
    mask: &[u8],
    dims: [usize; 3],
    ng: usize,
    mode: RoiMode,
) -> DiscretizedRoi {
    let inside: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m != 0)
        .map(|(&v, _)| v)
        .collect();
    let binned = discretize_values(&inside, ng);
    let mut levels = vec![0u16; values.len()];
    let mut it = binned.into_iter();
    for (l, &m) in levels.iter_mut().zip(mask) {
        if m != 0 {
            *l = it.next().expect("one bin per ROI voxel");
        }
    }
    DiscretizedRoi {
        dims,
        levels,
        ng,
        mode,
    }
}

pub(crate) fn slice_of<T: Copy>(data: &[T], dims: [usize; 3], z: usize) -> Vec<T> {
    let plane = dims[0] * dims[1];
    data[z * plane..(z + 1) * plane].to_vec()
}

/// Discretize the ROI of `m` on `v`; single-slice masks give a planar ROI.
pub fn discretize(v: &ImageVolume, m: &RoiMask, ng: usize) -> Result<DiscretizedRoi> {
    if v.geometry() != m.geometry() {
        return Err(Error::Geometry("volume and mask grids differ".into()));
    }
    if ng == 0 {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    let dims = v.dims();
    Ok(match m.kind() {
        MaskKind::Mask3D => discretize_grid(v.voxels(), m.voxels(), dims, ng, RoiMode::Volumetric),
        MaskKind::Mask2D(k) => discretize_grid(
            &slice_of(v.voxels(), dims, k),
            &slice_of(m.voxels(), dims, k),
            [dims[0], dims[1], 1],
            ng,
            RoiMode::Planar(k),
        ),
    })
}
