//! Single-level undecimated 3D Haar filter bank.
//!
//! Each axis is filtered with `low = [1, 1]/√2` or `high = [1, -1]/√2`
//! applied as `out[i] = h0 * x[i] + h1 * x[i + 1]`, without decimation, so
//! every band is voxel-aligned with the input and the ROI mask can be reused.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::imgio::ImageVolume;

/// Extension rule for `x[n]` at the end of each line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Half-sample symmetric: `x[n] = x[n - 1]`.
    Mirror,
    /// Circular: `x[n] = x[0]`.
    Periodic,
}

pub const LOW: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
pub const HIGH: [f64; 2] = [FRAC_1_SQRT_2, -FRAC_1_SQRT_2];

/// Band labels in output order; letter `a` is the filter on axis `a` (x, y, z).
pub const BAND_LABELS: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBand {
    pub label: &'static str,
    pub image: ImageVolume,
}

fn filter_axis(src: &[f64], dims: [usize; 3], axis: usize, taps: [f64; 2], boundary: Boundary) -> Vec<f64> {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis];
    let mut out = vec![0.0; src.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let pos = (idx / stride) % n;
        let next = if pos + 1 < n {
            idx + stride
        } else {
            match boundary {
                Boundary::Mirror => idx,
                Boundary::Periodic => idx - pos * stride,
            }
        };
        *o = taps[0] * src[idx] + taps[1] * src[next];
    }
    out
}

/// Decompose `v` into the eight mask-aligned bands, mirror boundary.
pub fn swt3(v: &ImageVolume) -> Vec<WaveletBand> {
    swt3_with_boundary(v, Boundary::Mirror)
}

pub fn swt3_with_boundary(v: &ImageVolume, boundary: Boundary) -> Vec<WaveletBand> {
    let dims = v.dims();
    let data = v.voxels();
    let mut bands = Vec::with_capacity(8);
    let x_pass: Vec<Vec<f64>> = [LOW, HIGH]
        .iter()
        .map(|&t| filter_axis(data, dims, 0, t, boundary))
        .collect();
    for (ix, xd) in x_pass.iter().enumerate() {
        for (iy, &ty) in [LOW, HIGH].iter().enumerate() {
            let yd = filter_axis(xd, dims, 1, ty, boundary);
            for (iz, &tz) in [LOW, HIGH].iter().enumerate() {
                let zd = filter_axis(&yd, dims, 2, tz, boundary);
                let label = BAND_LABELS[ix * 4 + iy * 2 + iz];
                let image = ImageVolume::new(*v.geometry(), zd)
                    .expect("filtered finite input stays finite");
                bands.push(WaveletBand { label, image });
            }
        }
    }
    bands
}
