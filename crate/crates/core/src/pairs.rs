//! Ordinal point pairs: labelling by depth ratio and edge-guided sampling.
//!
//! Shared by the ranking loss and the ordinal error metric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edges::sobel_gradients;
use crate::error::{check_shape, Error, Result};
use crate::maps::{BinaryMask, DepthMap, Raster};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 1.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointPair {
    pub p0: (usize, usize),
    pub p1: (usize, usize),
    pub label: i8,
}

/// `+1` if `a > tau·b`, `−1` if `a·tau < b`, otherwise `0`.
pub fn ordinal_label(a: f64, b: f64, tau: f64) -> i8 {
    if a > tau * b {
        1
    } else if a * tau < b {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSampling {
    pub count: usize,
    pub ratio_threshold: f64,
    /// Fraction of pairs placed across masked edge pixels.
    pub edge_fraction: f64,
    /// Maximum distance of each endpoint from the edge pixel.
    pub reach: usize,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self {
            count: 1000,
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            edge_fraction: 0.5,
            reach: 8,
            seed: 0,
        }
    }
}

impl PairSampling {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::arg("pair count must be >= 1"));
        }
        if !(self.ratio_threshold > 1.0) || !self.ratio_threshold.is_finite() {
            return Err(Error::arg(format!("ratio threshold {} must be > 1", self.ratio_threshold)));
        }
        if !(0.0..=1.0).contains(&self.edge_fraction) {
            return Err(Error::arg(format!("edge fraction {} must lie in [0, 1]", self.edge_fraction)));
        }
        if self.reach < 2 {
            return Err(Error::arg("edge pair reach must be >= 2"));
        }
        Ok(())
    }
}

/// Samples `count` pairs with the default edge fraction (50%).
pub fn sample_pairs_edge_guided(
    gt: &DepthMap,
    edge_mask: &BinaryMask,
    count: usize,
    ratio_threshold: f64,
    seed: u64,
) -> Result<Vec<PointPair>> {
    sample_pairs(
        gt,
        edge_mask,
        &PairSampling {
            count,
            ratio_threshold,
            seed,
            ..PairSampling::default()
        },
    )
}

/// Edge pairs pick a masked pixel `m` and place the endpoints at `m ± r·u`,
/// where `u` is the ground-truth gradient direction jittered by up to 45° and
/// `r` is uniform in `[2, reach]`; the remaining pairs are uniform. An empty
/// mask yields all-uniform sampling.
pub fn sample_pairs(gt: &DepthMap, edge_mask: &BinaryMask, cfg: &PairSampling) -> Result<Vec<PointPair>> {
    cfg.validate()?;
    check_shape(gt.dims(), edge_mask.dims())?;
    let (w, h) = gt.dims();
    let edge_pixels: Vec<usize> = edge_mask
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let (gx, gy) = sobel_gradients(gt.data(), w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let label = |p0: (usize, usize), p1: (usize, usize)| {
        ordinal_label(gt.at(p0.0, p0.1) as f64, gt.at(p1.0, p1.1) as f64, cfg.ratio_threshold)
    };

    let mut pairs = Vec::with_capacity(cfg.count);
    while pairs.len() < cfg.count {
        let on_edge = !edge_pixels.is_empty() && rng.random_bool(cfg.edge_fraction);
        let (p0, p1) = if on_edge {
            let m = edge_pixels[rng.random_range(0..edge_pixels.len())];
            let (mx, my) = (m % w, m / w);
            let base = if gx[m] == 0.0 && gy[m] == 0.0 {
                rng.random_range(0.0..std::f64::consts::TAU)
            } else {
                (gy[m] as f64).atan2(gx[m] as f64)
            };
            let angle = base + rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4);
            let r = rng.random_range(2..=cfg.reach) as f64;
            let (dx, dy) = (r * angle.cos(), r * angle.sin());
            let place = |s: f64| {
                let x = (mx as f64 + s * dx).round().clamp(0.0, (w - 1) as f64) as usize;
                let y = (my as f64 + s * dy).round().clamp(0.0, (h - 1) as f64) as usize;
                (x, y)
            };
            if rng.random_bool(0.5) {
                (place(-1.0), place(1.0))
            } else {
                (place(1.0), place(-1.0))
            }
        } else {
            let a = rng.random_range(0..w * h);
            let b = rng.random_range(0..w * h);
            ((a % w, a / w), (b % w, b / w))
        };
        if p0 == p1 {
            continue;
        }
        pairs.push(PointPair {
            p0,
            p1,
            label: label(p0, p1),
        });
    }
    Ok(pairs)
}
