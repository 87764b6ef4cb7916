//! Bilinear resampling, backward warping and depth-space conversion.
//!
//! Sampling uses half-pixel-centre alignment: output pixel `i` of `n_out`
//! maps to source coordinate `(i + 0.5) * n_in / n_out - 0.5`, clamped to the
//! valid range so borders replicate.

use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, EdgeMap, FlowField, Image, Raster};

/// A sparse linear map where each output pixel is a weighted sum of at most
/// four input pixels of a single plane.
#[derive(Debug, Clone)]
pub struct Taps {
    in_len: usize,
    index: Vec<[u32; 4]>,
    weight: Vec<[f64; 4]>,
}

impl Taps {
    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.index.len()
    }

    pub fn taps(&self, out: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.index[out]
            .iter()
            .zip(&self.weight[out])
            .filter(|(_, &w)| w != 0.0)
            .map(|(&i, &w)| (i as usize, w))
    }

    /// Applies the map to `channels`-interleaved data. Results are clamped
    /// to the range of the contributing samples so that rounding never
    /// escapes the convex hull.
    pub fn apply(&self, src: &[f32], channels: usize) -> Vec<f32> {
        debug_assert_eq!(src.len(), self.in_len * channels);
        let mut out = Vec::with_capacity(self.out_len() * channels);
        for o in 0..self.out_len() {
            for c in 0..channels {
                let mut acc = 0.0f64;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (i, w) in self.taps(o) {
                    let v = src[i * channels + c] as f64;
                    acc += w * v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                out.push(acc.clamp(lo, hi) as f32);
            }
        }
        out
    }

    /// Adjoint of [`Taps::apply`] for a single channel (scatter-add).
    pub fn apply_transpose(&self, grad_out: &[f32]) -> Vec<f32> {
        let mut g = vec![0.0f32; self.in_len];
        for (o, &go) in grad_out.iter().enumerate() {
            for (i, w) in self.taps(o) {
                g[i] += (w as f32) * go;
            }
        }
        g
    }
}

fn push_bilinear(
    index: &mut Vec<[u32; 4]>,
    weight: &mut Vec<[f64; 4]>,
    sx: f64,
    sy: f64,
    w: usize,
    h: usize,
) {
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    index.push([
        (y0 * w + x0) as u32,
        (y0 * w + x1) as u32,
        (y1 * w + x0) as u32,
        (y1 * w + x1) as u32,
    ]);
    weight.push([
        (1.0 - fx) * (1.0 - fy),
        fx * (1.0 - fy),
        (1.0 - fx) * fy,
        fx * fy,
    ]);
}

/// Taps for resizing a `in_w × in_h` plane to `out_w × out_h`.
pub fn resize_taps(in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Taps {
    let mut index = Vec::with_capacity(out_w * out_h);
    let mut weight = Vec::with_capacity(out_w * out_h);
    let rx = in_w as f64 / out_w as f64;
    let ry = in_h as f64 / out_h as f64;
    for y in 0..out_h {
        let sy = (y as f64 + 0.5) * ry - 0.5;
        for x in 0..out_w {
            let sx = (x as f64 + 0.5) * rx - 0.5;
            push_bilinear(&mut index, &mut weight, sx, sy, in_w, in_h);
        }
    }
    Taps {
        in_len: in_w * in_h,
        index,
        weight,
    }
}

/// Taps sampling each pixel `p` at `p + flow(p)`, clamped to the frame.
pub fn warp_taps(flow: &FlowField) -> Taps {
    let (w, h) = flow.dims();
    let mut index = Vec::with_capacity(w * h);
    let mut weight = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [dx, dy] = flow.at(x, y);
            push_bilinear(
                &mut index,
                &mut weight,
                x as f64 + dx as f64,
                y as f64 + dy as f64,
                w,
                h,
            );
        }
    }
    Taps {
        in_len: w * h,
        index,
        weight,
    }
}

/// Maps that can be bilinearly resampled.
pub trait Resample: Raster + Sized {
    fn resample(&self, taps: &Taps, width: usize, height: usize) -> Self;
}

impl Resample for DepthMap {
    fn resample(&self, taps: &Taps, width: usize, height: usize) -> Self {
        let mut out = DepthMap::from_computed(width, height, taps.apply(self.data(), 1));
        if let Some(valid) = self.valid_mask() {
            // an output sample is valid only if every contributing input is
            let mask = (0..taps.out_len())
                .map(|o| taps.taps(o).all(|(i, _)| valid[i]))
                .collect();
            out.set_valid_mask(Some(mask)).expect("mask length matches");
        }
        out
    }
}

impl Resample for Image {
    fn resample(&self, taps: &Taps, width: usize, height: usize) -> Self {
        Image::from_clamped(width, height, taps.apply(self.data(), 3))
    }
}

impl Resample for EdgeMap {
    fn resample(&self, taps: &Taps, width: usize, height: usize) -> Self {
        EdgeMap::from_clamped(width, height, taps.apply(self.data(), 1))
    }
}

pub fn resize_bilinear<M: Resample>(map: &M, out_w: usize, out_h: usize) -> Result<M> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::arg(format!("resize target {out_w}x{out_h} has a zero dimension")));
    }
    let taps = resize_taps(map.width(), map.height(), out_w, out_h);
    Ok(map.resample(&taps, out_w, out_h))
}

/// Backward warp: `out(p) = map(p + flow(p))` with bilinear sampling and
/// border clamping.
pub fn warp_backward<M: Resample>(map: &M, flow: &FlowField) -> Result<M> {
    check_shape(map.dims(), flow.dims())?;
    Ok(map.resample(&warp_taps(flow), map.width(), map.height()))
}

/// Converts disparity-like maps to depth space: `v ↦ d_max − v`.
pub fn to_depth_space(map: &DepthMap, d_max: f32) -> Result<DepthMap> {
    if let Some((_, hi)) = map.min_max() {
        if d_max < hi {
            return Err(Error::arg(format!(
                "d_max {d_max} is below the map maximum {hi}; result would be negative"
            )));
        }
    }
    Ok(map.map(|v| d_max - v))
}
