//! Scale-and-shift-invariant trimmed absolute error, with its gradient.

use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, Raster};

pub const DEFAULT_TRIM: f64 = 0.2;

/// Loss and gradient with respect to `pred` over the pixels in `idx`.
///
/// `pred` is aligned to `gt` by least squares, absolute residuals are
/// sorted, the largest `⌊trim·n⌋` are discarded and the rest averaged. The
/// gradient accounts for the dependence of the fitted scale and shift on
/// `pred`.
pub(crate) fn ssi_trim_loss_and_grad(pred: &[f32], gt: &[f32], idx: &[usize], trim: f64) -> Result<(f64, Vec<f32>)> {
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::arg(format!("trim fraction {trim} must lie in [0, 0.5)")));
    }
    let n = idx.len();
    if n < 2 {
        return Err(Error::Loss(format!("{n} usable pixels, need at least 2")));
    }
    let nf = n as f64;
    let p: Vec<f64> = idx.iter().map(|&i| pred[i] as f64).collect();
    let g: Vec<f64> = idx.iter().map(|&i| gt[i] as f64).collect();
    let mp = p.iter().sum::<f64>() / nf;
    let mg = g.iter().sum::<f64>() / nf;
    let spp: f64 = p.iter().map(|v| (v - mp).powi(2)).sum();
    if !(spp > 0.0) {
        return Err(Error::Loss("prediction has zero variance".into()));
    }
    let spg: f64 = p.iter().zip(&g).map(|(a, b)| (a - mp) * (b - mg)).sum();
    let s = spg / spp;
    let t = mg - s * mp;
    let resid: Vec<f64> = p.iter().zip(&g).map(|(a, b)| s * a + t - b).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
    let keep = n - (trim * nf).floor() as usize;
    let kf = keep as f64;
    let loss = order[..keep].iter().map(|&k| resid[k].abs()).sum::<f64>() / kf;

    // u = dL/d(aligned); chain through aligned = s·p + t with s, t functions of p
    let mut u = vec![0.0f64; n];
    for &k in &order[..keep] {
        u[k] = resid[k].signum() * (resid[k] != 0.0) as u8 as f64 / kf;
    }
    let usum: f64 = u.iter().sum();
    let up: f64 = u.iter().zip(&p).map(|(a, b)| a * (b - mp)).sum();
    let mut grad = vec![0.0f32; pred.len()];
    for (k, &i) in idx.iter().enumerate() {
        let ds = ((g[k] - mg) - 2.0 * s * (p[k] - mp)) / spp;
        grad[i] = (s * (u[k] - usum / nf) + ds * up) as f32;
    }
    Ok((loss, grad))
}

/// Trimmed mean absolute error after least-squares scale-and-shift
/// alignment of `pred` to `gt`, over pixels valid in both maps.
pub fn loss_ssi_trim(pred: &DepthMap, gt: &DepthMap, trim_fraction: f64) -> Result<f64> {
    check_shape(gt.dims(), pred.dims())?;
    let idx: Vec<usize> = (0..pred.pixel_count()).filter(|&i| pred.is_valid(i) && gt.is_valid(i)).collect();
    Ok(ssi_trim_loss_and_grad(pred.data(), gt.data(), &idx, trim_fraction)?.0)
}
