//! Isotropic resampling: B-spline interpolation for images (degree 0–3,
//! mirror boundary) and linear interpolation plus thresholding for masks.
//!
//! The output grid is anchored at the input origin with
//! `n_out = max(1, round(n_in * s_in / s_out))` samples per axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{Geometry, ImageVolume, MaskKind, RoiMask};

/// Which axes receive the target spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResampleAxes {
    All,
    /// x and y only; slice thickness is kept (2D protocol).
    InPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub target_spacing: f64,
    pub image_order: u8,
    pub mask_threshold: f64,
    pub axes: ResampleAxes,
}

impl ResampleSpec {
    pub fn new(target_spacing: f64, axes: ResampleAxes) -> Result<Self> {
        let s = ResampleSpec {
            target_spacing,
            image_order: 3,
            mask_threshold: 0.5,
            axes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_spacing > 0.0 && self.target_spacing.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "target spacing must be positive, got {}",
                self.target_spacing
            )));
        }
        if self.image_order > 3 {
            return Err(Error::InvalidInput(format!(
                "spline order must be in 0..=3, got {}",
                self.image_order
            )));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mask threshold must be in (0,1), got {}",
                self.mask_threshold
            )));
        }
        Ok(())
    }

    fn axis_active(&self, axis: usize) -> bool {
        match self.axes {
            ResampleAxes::All => true,
            ResampleAxes::InPlane => axis < 2,
        }
    }
}

/// Output geometry for `spec` applied to `g`.
pub fn output_geometry(g: &Geometry, spec: &ResampleSpec) -> Geometry {
    let mut dims = g.dims;
    let mut spacing = g.spacing;
    for a in 0..3 {
        if spec.axis_active(a) {
            let n = (g.dims[a] as f64 * g.spacing[a] / spec.target_spacing).round();
            dims[a] = (n as usize).max(1);
            spacing[a] = spec.target_spacing;
        }
    }
    Geometry {
        dims,
        spacing,
        origin: g.origin,
    }
}

/// Whole-sample symmetric extension: index folded into `[0, n)`.
#[inline]
fn mirror(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = k.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

fn pole(order: u8) -> Option<f64> {
    match order {
        2 => Some(8f64.sqrt() - 3.0),
        3 => Some(3f64.sqrt() - 2.0),
        _ => None,
    }
}

/// In-place interpolation prefilter (samples → B-spline coefficients) for a
/// single line, mirror boundary, exact causal initialization.
fn prefilter_line(c: &mut [f64], z: f64) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in c.iter_mut() {
        *v *= gain;
    }
    // causal init: sum over the mirrored period
    let mut zn = z;
    let iz = 1.0 / z;
    let mut z2n = z.powi(n as i32 - 1);
    let mut sum = c[0] + z2n * c[n - 1];
    z2n *= z2n * iz;
    for v in c.iter().take(n - 1).skip(1) {
        sum += (zn + z2n) * v;
        zn *= z;
        z2n *= iz;
    }
    c[0] = sum / (1.0 - zn * zn);
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

/// Weights and first tap index of a degree-`order` B-spline at position `t`.
#[inline]
fn spline_weights(order: u8, t: f64, w: &mut [f64; 4]) -> (isize, usize) {
    match order {
        0 => {
            w[0] = 1.0;
            ((t + 0.5).floor() as isize, 1)
        }
        1 => {
            let i = t.floor();
            let f = t - i;
            w[0] = 1.0 - f;
            w[1] = f;
            (i as isize, 2)
        }
        2 => {
            let i = (t + 0.5).floor();
            let f = t - i; // in [-0.5, 0.5)
            w[0] = 0.5 * (0.5 - f) * (0.5 - f);
            w[1] = 0.75 - f * f;
            w[2] = 0.5 * (0.5 + f) * (0.5 + f);
            (i as isize - 1, 3)
        }
        _ => {
            let i = t.floor();
            let f = t - i;
            let g = 1.0 - f;
            w[0] = g * g * g / 6.0;
            w[1] = 2.0 / 3.0 - f * f + 0.5 * f * f * f;
            w[2] = 2.0 / 3.0 - g * g + 0.5 * g * g * g;
            w[3] = f * f * f / 6.0;
            (i as isize - 1, 4)
        }
    }
}

/// Apply `f` to every line along `axis` of a grid with dims `dims`.
fn for_each_line(data: &mut [f64], dims: [usize; 3], axis: usize, mut f: impl FnMut(&mut [f64])) {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis];
    let mut line = vec![0.0; n];
    let (o1, o2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for b in 0..dims[o2] {
        for a in 0..dims[o1] {
            let mut idx = [0usize; 3];
            idx[o1] = a;
            idx[o2] = b;
            let base = idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]);
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * stride];
            }
            f(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[base + k * stride] = *v;
            }
        }
    }
}

/// Evaluate the spline along `axis` at `n_out` positions `i * step`.
fn evaluate_axis(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    n_out: usize,
    step: f64,
    order: u8,
) -> Vec<f64> {
    let n_in = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = n_out;
    let taps: Vec<(isize, usize, [f64; 4])> = (0..n_out)
        .map(|i| {
            let mut w = [0.0; 4];
            let (first, count) = spline_weights(order, i as f64 * step, &mut w);
            (first, count, w)
        })
        .collect();
    let mut out = vec![0.0; out_dims[0] * out_dims[1] * out_dims[2]];
    let in_stride = [1, dims[0], dims[0] * dims[1]];
    let out_stride = [1, out_dims[0], out_dims[0] * out_dims[1]];
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let o = [x, y, z];
                let mut base = 0;
                for a in 0..3 {
                    if a != axis {
                        base += o[a] * in_stride[a];
                    }
                }
                let (first, count, w) = &taps[o[axis]];
                let mut acc = 0.0;
                for (k, wk) in w.iter().enumerate().take(*count) {
                    let src = mirror(first + k as isize, n_in);
                    acc += wk * data[base + src * in_stride[axis]];
                }
                out[x * out_stride[0] + y * out_stride[1] + z * out_stride[2]] = acc;
            }
        }
    }
    out
}

fn resample_field(
    values: &[f64],
    g: &Geometry,
    spec: &ResampleSpec,
    order: u8,
    prefilter: bool,
) -> (Geometry, Vec<f64>) {
    let out_g = output_geometry(g, spec);
    let mut data = values.to_vec();
    let mut dims = g.dims;
    for axis in 0..3 {
        if !spec.axis_active(axis) {
            continue;
        }
        let n_out = out_g.dims[axis];
        let step = spec.target_spacing / g.spacing[axis];
        if n_out == dims[axis] && step == 1.0 {
            continue;
        }
        if prefilter {
            if let Some(z) = pole(order) {
                for_each_line(&mut data, dims, axis, |line| prefilter_line(line, z));
            }
        }
        data = evaluate_axis(&data, dims, axis, n_out, step, order);
        dims[axis] = n_out;
    }
    (out_g, data)
}

/// Resample an image with a B-spline of degree `spec.image_order`.
pub fn resample_volume(v: &ImageVolume, spec: &ResampleSpec) -> Result<ImageVolume> {
    spec.validate()?;
    let (g, data) = resample_field(v.voxels(), v.geometry(), spec, spec.image_order, true);
    ImageVolume::new(g, data)
}

/// Resample a mask by linear interpolation and thresholding. Single-slice
/// masks are resampled in-plane only and keep their slice index.
pub fn resample_mask(m: &RoiMask, spec: &ResampleSpec) -> Result<RoiMask> {
    spec.validate()?;
    let mut spec = *spec;
    if let MaskKind::Mask2D(_) = m.kind() {
        spec.axes = ResampleAxes::InPlane;
    }
    let field: Vec<f64> = m.voxels().iter().map(|&v| f64::from(v)).collect();
    let (g, data) = resample_field(&field, m.geometry(), &spec, 1, false);
    let voxels: Vec<u8> = data
        .iter()
        .map(|&v| u8::from(v >= spec.mask_threshold))
        .collect();
    if !voxels.iter().any(|&v| v != 0) {
        return Err(Error::DegenerateRoi(format!(
            "mask vanished when resampled to {} mm",
            spec.target_spacing
        )));
    }
    RoiMask::new(g, voxels, m.kind())
}

/// Crop volume and mask to the mask bounding box padded by `pad` voxels per
/// side (clamped to the grid).
pub fn crop_to_roi(v: &ImageVolume, m: &RoiMask, pad: usize) -> Result<(ImageVolume, RoiMask)> {
    if v.geometry() != m.geometry() {
        return Err(Error::Geometry("volume and mask grids differ".into()));
    }
    let (lo, hi) = m.bounding_box();
    let dims = v.dims();
    let mut clo = [0; 3];
    let mut chi = [0; 3];
    for a in 0..3 {
        clo[a] = lo[a].saturating_sub(pad);
        chi[a] = (hi[a] + pad).min(dims[a]);
    }
    Ok((v.crop(clo, chi), m.crop(clo, chi)?))
}
