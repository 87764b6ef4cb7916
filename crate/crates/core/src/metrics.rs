//! Depth evaluation: least-squares alignment, Canny masks and the metric
//! report (AbsRel, SqRel, RMSE, δ1, ESR, EcSR, ORD).

use std::fmt;

use crate::degrade::blur_interleaved;
use crate::edges::{binarize, sobel_gradients, sobel_magnitude};
use crate::error::{check_shape, Error, Result};
use crate::maps::{BinaryMask, DepthMap, Image, Raster};
use crate::pairs::{ordinal_label, sample_pairs, PairSampling, DEFAULT_RATIO_THRESHOLD};

pub const CANNY_LOW: f32 = 100.0;
pub const CANNY_HIGH: f32 = 200.0;
const CANNY_SIGMA: f32 = 1.4;

fn usable(pred: &DepthMap, gt: &DepthMap, i: usize) -> bool {
    pred.is_valid(i) && gt.is_valid(i)
}

/// Scale and shift minimizing `Σ(s·pred + t − gt)²` over pixels that are in
/// `mask` and valid in both maps.
pub fn align_lsq(pred: &DepthMap, gt: &DepthMap, mask: &BinaryMask) -> Result<(f64, f64, DepthMap)> {
    check_shape(gt.dims(), pred.dims())?;
    check_shape(gt.dims(), mask.dims())?;
    let idx: Vec<usize> = (0..pred.pixel_count())
        .filter(|&i| mask.data()[i] && usable(pred, gt, i))
        .collect();
    let (s, t) = fit_affine(pred.data(), gt.data(), &idx)?;
    let aligned = pred.map(|v| (s * v as f64 + t) as f32);
    Ok((s, t, aligned))
}

fn fit_affine(pred: &[f32], gt: &[f32], idx: &[usize]) -> Result<(f64, f64)> {
    if idx.len() < 2 {
        return Err(Error::Alignment(format!("{} usable pixels, need at least 2", idx.len())));
    }
    let n = idx.len() as f64;
    let mp = idx.iter().map(|&i| pred[i] as f64).sum::<f64>() / n;
    let mg = idx.iter().map(|&i| gt[i] as f64).sum::<f64>() / n;
    let (mut spp, mut spg) = (0.0, 0.0);
    for &i in idx {
        let dp = pred[i] as f64 - mp;
        spp += dp * dp;
        spg += dp * (gt[i] as f64 - mg);
    }
    if spp == 0.0 {
        return Err(Error::Alignment("prediction is constant over the mask".into()));
    }
    let s = spg / spp;
    Ok((s, mg - s * mp))
}

/// The depth min-max normalized over its valid pixels as a grey image;
/// invalid pixels are black.
pub fn depth_to_grey(depth: &DepthMap) -> Image {
    let (lo, hi) = depth.min_max().unwrap_or((0.0, 1.0));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let w = depth.width();
    Image::from_fn(w, depth.height(), |x, y| {
        let i = y * w + x;
        let v = if depth.is_valid(i) { (depth.data()[i] - lo) / range } else { 0.0 };
        [v; 3]
    })
}

/// Depth edges: Sobel magnitude of [`depth_to_grey`], normalized by its
/// maximum and binarized at `threshold`.
pub fn depth_edge_mask(depth: &DepthMap, threshold: f32) -> Result<BinaryMask> {
    binarize(&sobel_magnitude(&depth_to_grey(depth)), threshold)
}

/// Canny edges of the image luminance on the 0–255 scale: Gaussian σ = 1.4,
/// Sobel gradients, non-maximum suppression over four quantized directions
/// and hysteresis between `low` and `high` (8-connected).
pub fn canny(image: &Image, low: f32, high: f32) -> Result<BinaryMask> {
    if !(low < high) {
        return Err(Error::arg(format!("canny low threshold {low} must be below high {high}")));
    }
    let (w, h) = image.dims();
    let lum: Vec<f32> = image.luminance().iter().map(|v| v * 255.0).collect();
    let smooth = blur_interleaved(&lum, w, h, 1, CANNY_SIGMA);
    let (gx, gy) = sobel_gradients(&smooth, w, h);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect();

    let thin = non_max_suppress(&mag, &gx, &gy, w, h);

    let mut out = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= high).collect();
    for &i in &stack {
        out[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !out[j] && thin[j] >= low {
                    out[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    BinaryMask::new(w, h, out)
}

/// Keeps magnitudes that are local maxima along the quantized gradient
/// direction; borders and everything else become zero.
pub(crate) fn non_max_suppress(mag: &[f32], gx: &[f32], gy: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut thin = vec![0.0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dx, dy) = canny_step(gx[i], gy[i]);
            let prev = mag[(y as i64 - dy) as usize * w + (x as i64 - dx) as usize];
            let next = mag[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
            // ties keep the first pixel along the direction so plateaus stay one pixel wide
            if m > prev && m >= next {
                thin[i] = m;
            }
        }
    }
    thin
}

/// Neighbour offset along the gradient, quantized to 0°, 45°, 90° or 135°.
pub(crate) fn canny_step(gx: f32, gy: f32) -> (i64, i64) {
    let mut angle = (gy as f64).atan2(gx as f64).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdConfig {
    pub pair_count: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for OrdConfig {
    fn default() -> Self {
        Self {
            pair_count: 5000,
            tau: DEFAULT_RATIO_THRESHOLD,
            seed: 0,
        }
    }
}

/// Metric values; `None` marks a metric whose pixel or pair set was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub absrel: Option<f64>,
    pub sqrel: Option<f64>,
    pub rmse: Option<f64>,
    pub delta1: Option<f64>,
    pub esr: Option<f64>,
    pub ecsr: Option<f64>,
    pub ord: Option<f64>,
    pub scale: f64,
    pub shift: f64,
    pub valid_pixels: usize,
    pub ord_pairs: usize,
    pub tau: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "absrel,sqrel,rmse,delta1,esr,ecsr,ord,scale,shift,valid_pixels,ord_pairs,tau";

    pub fn values(&self) -> [Option<f64>; 7] {
        [self.absrel, self.sqrel, self.rmse, self.delta1, self.esr, self.ecsr, self.ord]
    }

    pub fn to_csv(&self) -> String {
        let mut cols: Vec<String> = self.values().iter().map(|v| fmt_opt(*v)).collect();
        cols.push(format!("{}", self.scale));
        cols.push(format!("{}", self.shift));
        cols.push(self.valid_pixels.to_string());
        cols.push(self.ord_pairs.to_string());
        cols.push(format!("{}", self.tau));
        cols.join(",")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x}"))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["AbsRel", "SqRel", "RMSE", "delta1", "ESR", "EcSR", "ORD"];
        for (name, v) in names.iter().zip(self.values()) {
            writeln!(f, "{name:>8}  {}", v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}")))?;
        }
        writeln!(f, "{:>8}  {:.6}", "scale", self.scale)?;
        writeln!(f, "{:>8}  {:.6}", "shift", self.shift)?;
        write!(f, "{:>8}  {}", "pixels", self.valid_pixels)
    }
}

/// Evaluates `pred` against `gt`. With `align`, one least-squares fit over
/// all valid pixels is applied before every metric. Valid ground truth must
/// be positive.
pub fn compute_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    edge_mask: &BinaryMask,
    canny_mask: &BinaryMask,
    ord_config: &OrdConfig,
    align: bool,
) -> Result<MetricReport> {
    check_shape(gt.dims(), pred.dims())?;
    check_shape(gt.dims(), edge_mask.dims())?;
    check_shape(gt.dims(), canny_mask.dims())?;
    let n = gt.pixel_count();
    let idx: Vec<usize> = (0..n).filter(|&i| usable(pred, gt, i)).collect();
    if let Some(&i) = idx.iter().find(|&&i| !(gt.data()[i] > 0.0)) {
        return Err(Error::arg(format!(
            "ground truth must be positive on valid pixels (pixel {i} is {})",
            gt.data()[i]
        )));
    }
    let (scale, shift) = if align && !idx.is_empty() {
        fit_affine(pred.data(), gt.data(), &idx)?
    } else {
        (1.0, 0.0)
    };
    let d: Vec<f64> = pred.data().iter().map(|&v| scale * v as f64 + shift).collect();
    let g: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();

    let mean_over = |sel: &mut dyn Iterator<Item = usize>, f: &dyn Fn(usize) -> f64| -> Option<f64> {
        let (mut s, mut k) = (0.0, 0usize);
        for i in sel {
            s += f(i);
            k += 1;
        }
        (k > 0).then(|| s / k as f64)
    };
    let sq_rel = |i: usize| (d[i] - g[i]).powi(2) / g[i];

    let absrel = mean_over(&mut idx.iter().copied(), &|i| (d[i] - g[i]).abs() / g[i]);
    let sqrel = mean_over(&mut idx.iter().copied(), &sq_rel);
    let rmse = mean_over(&mut idx.iter().copied(), &|i| (d[i] - g[i]).powi(2)).map(f64::sqrt);
    let delta1 = mean_over(&mut idx.iter().copied(), &|i| {
        let ok = d[i] > 0.0 && (d[i] / g[i]).max(g[i] / d[i]) < 1.25;
        if ok {
            1.0
        } else {
            0.0
        }
    });
    let esr = mean_over(&mut idx.iter().copied().filter(|&i| edge_mask.data()[i]), &sq_rel);
    let ecsr = mean_over(&mut idx.iter().copied().filter(|&i| canny_mask.data()[i]), &sq_rel);

    let (ord, ord_pairs) = if idx.is_empty() {
        (None, 0)
    } else {
        let pairs = sample_pairs(
            gt,
            edge_mask,
            &PairSampling {
                count: ord_config.pair_count,
                ratio_threshold: ord_config.tau,
                seed: ord_config.seed,
                ..PairSampling::default()
            },
        )?;
        let w = gt.width();
        let (mut wrong, mut total) = (0.0, 0.0);
        for p in &pairs {
            let (a, b) = (p.p0.1 * w + p.p0.0, p.p1.1 * w + p.p1.0);
            if !usable(pred, gt, a) || !usable(pred, gt, b) {
                continue;
            }
            total += 1.0;
            if ordinal_label(d[a], d[b], ord_config.tau) != p.label {
                wrong += 1.0;
            }
        }
        ((total > 0.0).then(|| wrong / total), total as usize)
    };

    Ok(MetricReport {
        absrel,
        sqrel,
        rmse,
        delta1,
        esr,
        ecsr,
        ord,
        scale,
        shift,
        valid_pixels: idx.len(),
        ord_pairs,
        tau: ord_config.tau,
    })
}
