//! ILNR regression loss and the pairwise ranking loss, with gradients.

use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, Raster};
use crate::pairs::PointPair;

/// Fraction trimmed from each end of the sorted ground truth.
pub const ILNR_TRIM: f64 = 0.1;

/// Mean and unbiased standard deviation of the valid values left after
/// dropping `⌊trim·n⌋` values from each end.
pub fn trimmed_stats(map: &DepthMap, trim: f64) -> Result<(f64, f64)> {
    let mut v: Vec<f64> = (0..map.pixel_count())
        .filter(|&i| map.is_valid(i))
        .map(|i| map.data()[i] as f64)
        .collect();
    v.sort_by(f64::total_cmp);
    let k = (trim * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    if kept.len() < 2 {
        return Err(Error::Loss(format!("{} values left after trimming, need 2", kept.len())));
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Trimmed z-score of a ground-truth map, the regression target of ILNR.
#[derive(Debug, Clone)]
pub struct IlnrTarget {
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl IlnrTarget {
    pub fn new(gt: &DepthMap) -> Result<Self> {
        let (mean, std) = trimmed_stats(gt, ILNR_TRIM)?;
        if !(std > 0.0) {
            return Err(Error::Loss("trimmed standard deviation of ground truth is zero".into()));
        }
        Ok(Self {
            values: gt.data().iter().map(|&g| (g as f64 - mean) / std).collect(),
            valid: (0..gt.pixel_count()).map(|i| gt.is_valid(i)).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Loss and its gradient with respect to `pred` (invalid pixels get 0).
    pub fn loss_and_grad(&self, pred: &[f32], pred_valid: impl Fn(usize) -> bool) -> (f64, Vec<f32>) {
        let idx: Vec<usize> = (0..pred.len()).filter(|&i| self.valid[i] && pred_valid(i)).collect();
        let mut grad = vec![0.0f32; pred.len()];
        if idx.is_empty() {
            return (0.0, grad);
        }
        let n = idx.len() as f64;
        let mut sum = 0.0;
        for &i in &idx {
            let d = pred[i] as f64;
            let t = self.values[i];
            let (td, tt) = ((d / 100.0).tanh(), (t / 100.0).tanh());
            sum += (d - t).abs() + (td - tt).abs();
            let g = sign(d - t) + sign(td - tt) * (1.0 - td * td) / 100.0;
            grad[i] = (g / n) as f32;
        }
        (sum / n, grad)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `mean |d − d̄*| + |tanh(d/100) − tanh(d̄*/100)|` over pixels valid in
/// both maps, where `d̄*` is the trimmed z-score of `gt`.
pub fn loss_ilnr(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    check_shape(gt.dims(), pred.dims())?;
    let target = IlnrTarget::new(gt)?;
    Ok(target.loss_and_grad(pred.data(), |i| pred.is_valid(i)).0)
}

/// `log(1 + e^{−x})` without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Logistic derivative `d/dx log(1 + e^{−x}) = −1 / (1 + e^{x})`.
fn softplus_neg_grad(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + x.exp())
    }
}

/// Ranking loss over a plane of width `width` and its gradient.
pub fn ranking_loss_and_grad(pred: &[f32], width: usize, pairs: &[PointPair]) -> (f64, Vec<f32>) {
    let mut grad = vec![0.0f32; pred.len()];
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let n = pairs.len() as f64;
    let mut sum = 0.0;
    for p in pairs {
        let a = p.p0.1 * width + p.p0.0;
        let b = p.p1.1 * width + p.p1.0;
        let diff = pred[a] as f64 - pred[b] as f64;
        let g = if p.label == 0 {
            sum += diff * diff;
            2.0 * diff
        } else {
            let l = p.label as f64;
            sum += softplus_neg(l * diff);
            l * softplus_neg_grad(l * diff)
        };
        grad[a] += (g / n) as f32;
        grad[b] -= (g / n) as f32;
    }
    (sum / n, grad)
}

/// Mean of `log(1 + exp(−ℓ·Δ))` for ordered pairs and `Δ²` for equal pairs,
/// with `Δ = pred(p0) − pred(p1)`.
pub fn loss_ranking(pred: &DepthMap, pairs: &[PointPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::arg("ranking loss needs at least one pair"));
    }
    let (w, h) = pred.dims();
    if let Some(p) = pairs.iter().find(|p| p.p0.0 >= w || p.p1.0 >= w || p.p0.1 >= h || p.p1.1 >= h) {
        return Err(Error::arg(format!("pair {p:?} lies outside the {w}x{h} map")));
    }
    Ok(ranking_loss_and_grad(pred.data(), w, pairs).0)
}

const SOBEL_TAPS: [(i64, i64, f64, f64); 8] = [
    (-1, -1, -1.0, -1.0),
    (0, -1, 0.0, -2.0),
    (1, -1, 1.0, -1.0),
    (-1, 0, -2.0, 0.0),
    (1, 0, 2.0, 0.0),
    (-1, 1, -1.0, 1.0),
    (0, 1, 0.0, 2.0),
    (1, 1, 1.0, 1.0),
];

/// Sobel gradient magnitude of a plane (replicated borders) together with
/// the component images needed for its adjoint.
pub(crate) fn gradient_magnitude(plane: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            for &(dx, dy, kx, ky) in &SOBEL_TAPS {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let v = plane[sy * w + sx] as f64;
                gx[y * w + x] += kx * v;
                gy[y * w + x] += ky * v;
            }
        }
    }
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b) as f32).collect();
    (mag, gx, gy)
}

/// Pulls a gradient on the magnitude back to the plane.
pub(crate) fn gradient_magnitude_adjoint(dmag: &[f32], gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = gx[i].hypot(gy[i]);
            if m == 0.0 || dmag[i] == 0.0 {
                continue;
            }
            let (cx, cy) = (dmag[i] as f64 * gx[i] / m, dmag[i] as f64 * gy[i] / m);
            for &(dx, dy, kx, ky) in &SOBEL_TAPS {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                out[sy * w + sx] += (kx * cx + ky * cy) as f32;
            }
        }
    }
    out
}
