//! Synthetic scenes and stand-in providers for desk-scale experiments.
//!
//! A scene is a tilted plane with one vertical depth step and a nearer
//! rectangle above and below the middle band. Its image encodes depth in
//! luminance with a per-region tint and fine texture. The stand-in depth
//! estimator reads depth back from blurred luminance, filling deleted (black)
//! pixels from their neighbours; the stand-in edge-to-depth estimator assigns
//! each region enclosed by edges a depth from its position only, which gives
//! sharp steps at the edges and a wrong overall structure.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcm::{ScaleGroup, GROUP_SIZE};
use crate::degrade::blur_interleaved;
use crate::edges::{sobel_gradients, HybridEdgeConfig};
use crate::metrics::non_max_suppress;
use crate::error::Result;
use crate::guided::GuidedFilterParams;
use crate::lfm::{make_pseudo_pair, LfmSample};
use crate::maps::{DepthMap, EdgeMap, Image, Raster};
use crate::pipeline::{edge_stage, EdgeSource, EdgeStage};

/// Luminance threshold above which a pixel of an edge image counts as edge.
pub const EDGE_IMAGE_THRESHOLD: f32 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: DepthMap,
    pub image: Image,
    /// First column on the far side of the vertical step.
    pub step_x: usize,
    /// Rows `[start, end)` crossed only by the step.
    pub band: (usize, usize),
}

/// Luminance change per unit of depth in scene images.
pub const LUMA_PER_DEPTH: f32 = 0.1;

fn luminance_of_depth(d: f32) -> f32 {
    0.75 - LUMA_PER_DEPTH * (d - 0.5)
}

fn depth_of_luminance(l: f32) -> f32 {
    (0.5 + (0.75 - l) / LUMA_PER_DEPTH).max(0.0)
}

/// Gaussian blur of a depth map (replicated borders).
pub fn blur_depth(map: &DepthMap, sigma: f32) -> DepthMap {
    let (w, h) = map.dims();
    DepthMap::from_fn(w, h, {
        let data = blur_interleaved(map.data(), w, h, 1, sigma);
        move |x, y| data[y * w + x]
    })
}

/// Deterministic scene of size `w × h` (both at least 32).
pub fn scene(seed: u64, w: usize, h: usize) -> Scene {
    assert!(w >= 32 && h >= 32, "scenes need at least 32x32 pixels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = rng.random_range(-0.15f32..0.15);
    let tilt = rng.random_range(0.0f32..0.2);
    let step_x = rng.random_range(w * 35 / 100..=w * 65 / 100);
    let mut delta = rng.random_range(0.5f32..0.9);
    if rng.random_bool(0.5) {
        delta = -delta;
    }
    let band = (h * 3 / 10 + h / 12, h * 7 / 10 - h / 12);
    let rect = |y0: usize, y1: usize, rng: &mut ChaCha8Rng| {
        let rw = rng.random_range(w / 6..=w / 3);
        let x0 = rng.random_range(2..w - rw - 2);
        (x0, x0 + rw, y0, y1, rng.random_range(0.3f32..0.6))
    };
    let top = rect(h / 12, h * 3 / 10 - 2, &mut rng);
    let bottom = rect(h * 7 / 10 + 2, h - h / 12, &mut rng);
    let region = |x: usize, y: usize| -> usize {
        for (i, &(x0, x1, y0, y1, _)) in [top, bottom].iter().enumerate() {
            if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                return 2 + i;
            }
        }
        usize::from(x >= step_x)
    };
    let gt = DepthMap::from_fn(w, h, |x, y| {
        let base = 2.0 + slope * (x as f32 / w as f32 - 0.5) + tilt * (y as f32 / h as f32 - 0.5);
        let stepped = if x >= step_x { base + delta } else { base };
        match region(x, y) {
            2 => stepped - top.4,
            3 => stepped - bottom.4,
            _ => stepped,
        }
    });
    let tints: Vec<[f32; 3]> = (0..4)
        .map(|_| [0; 3].map(|_: i32| rng.random_range(-0.015f32..0.015)))
        .collect();
    let noise: Vec<f32> = (0..w * h).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let texture = blur_interleaved(&noise, w, h, 1, 1.0);
    let image = Image::from_fn(w, h, |x, y| {
        let l = luminance_of_depth(gt.at(x, y)) + 0.015 * texture[y * w + x];
        let t = tints[region(x, y)];
        [l + t[0], l + t[1], l + t[2]].map(|v| v.clamp(0.0, 1.0))
    });
    Scene { gt, image, step_x, band }
}

/// Distance between the 10% and 90% crossings of a step profile, by linear
/// interpolation; levels come from the three samples at each end. `None`
/// for a flat profile.
pub fn rise_distance(profile: &[f32]) -> Option<f64> {
    let n = profile.len();
    if n < 6 {
        return None;
    }
    let lo = profile[..3].iter().map(|&v| v as f64).sum::<f64>() / 3.0;
    let hi = profile[n - 3..].iter().map(|&v| v as f64).sum::<f64>() / 3.0;
    let amp = hi - lo;
    if amp.abs() < 1e-9 {
        return None;
    }
    let q: Vec<f64> = profile.iter().map(|&v| (v as f64 - lo) / amp).collect();
    let crossing = |level: f64| -> Option<f64> {
        (1..n).find(|&i| q[i] >= level).map(|i| {
            let (a, b) = (q[i - 1], q[i]);
            if b > a && a < level {
                (i - 1) as f64 + (level - a) / (b - a)
            } else {
                i as f64
            }
        })
    };
    Some((crossing(0.9)? - crossing(0.1)?).abs())
}

/// Mean rise distance across the step over the band rows, using the
/// columns within `half_window` of the step.
pub fn step_rise(depth: &DepthMap, scene: &Scene, half_window: usize) -> Option<f64> {
    let w = depth.width();
    let x0 = scene.step_x.saturating_sub(half_window);
    let x1 = (scene.step_x + half_window).min(w);
    let rises: Vec<f64> = (scene.band.0..scene.band.1)
        .filter_map(|y| {
            let row: Vec<f32> = (x0..x1).map(|x| depth.at(x, y)).collect();
            rise_distance(&row)
        })
        .collect();
    (!rises.is_empty()).then(|| rises.iter().sum::<f64>() / rises.len() as f64)
}

/// Stand-in learned edge detector: thin, smoothed edges. The luminance is
/// blurred with σ 1.5, and the Sobel magnitude is kept only at maxima along
/// the gradient and normalized by its maximum. Border pixels copy their
/// nearest interior pixel.
pub fn learned_edge_standin(image: &Image) -> EdgeMap {
    let (w, h) = image.dims();
    let smooth = blur_interleaved(&image.luminance(), w, h, 1, 1.5);
    let (gx, gy) = sobel_gradients(&smooth, w, h);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let mut thin = non_max_suppress(&mag, &gx, &gy, w, h);
    if w > 2 && h > 2 {
        for y in 0..h {
            for x in 0..w {
                let (ix, iy) = (x.clamp(1, w - 2), y.clamp(1, h - 2));
                thin[y * w + x] = thin[iy * w + ix];
            }
        }
    }
    let max = thin.iter().copied().fold(0.0f32, f32::max);
    EdgeMap::from_clamped(w, h, thin.iter().map(|&m| if max > 0.0 { m / max } else { 0.0 }).collect())
}

/// Stand-in depth estimator for photographs: black pixels are treated as
/// missing and filled by normalized convolution, then depth is read from the
/// luminance after a σ 2 blur.
pub fn mde_standin(image: &Image) -> DepthMap {
    let (w, h) = image.dims();
    let lum = image.luminance();
    let known: Vec<f32> = image
        .data()
        .chunks_exact(3)
        .map(|p| if p.iter().all(|&c| c <= 0.0) { 0.0 } else { 1.0 })
        .collect();
    let masked: Vec<f32> = lum.iter().zip(&known).map(|(l, k)| l * k).collect();
    let mut sigma = 2.0f32;
    let filled = loop {
        let num = blur_interleaved(&masked, w, h, 1, sigma);
        let den = blur_interleaved(&known, w, h, 1, sigma);
        if den.iter().all(|&d| d > 1e-6) || sigma > (w.max(h) as f32) {
            break lum
                .iter()
                .zip(&known)
                .zip(num.iter().zip(&den))
                .map(|((&l, &k), (&n, &d))| if k > 0.0 { l } else if d > 1e-6 { n / d } else { 0.5 })
                .collect::<Vec<f32>>();
        }
        sigma *= 2.0;
    };
    let smooth = blur_interleaved(&filled, w, h, 1, 2.0);
    DepthMap::from_fn(w, h, |x, y| depth_of_luminance(smooth[y * w + x]))
}

/// Stand-in depth estimator for edge images: pixels brighter than
/// [`EDGE_IMAGE_THRESHOLD`] are edges, the 4-connected regions between them
/// get a depth from their centroid, and edge pixels take the depth of the
/// nearest region.
pub fn edge_depth_standin(edge_image: &Image) -> DepthMap {
    let (w, h) = edge_image.dims();
    let lum = edge_image.luminance();
    let edge: Vec<bool> = lum.iter().map(|&l| l >= EDGE_IMAGE_THRESHOLD).collect();
    let mut label = vec![usize::MAX; w * h];
    let mut values = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if edge[start] || label[start] != usize::MAX {
            continue;
        }
        let id = values.len();
        let mut members = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for j in neighbours4(i, w, h) {
                if !edge[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            }
        }
        let n = members.len() as f64;
        let cx = members.iter().map(|&i| (i % w) as f64).sum::<f64>() / n / w as f64;
        let cy = members.iter().map(|&i| (i / w) as f64).sum::<f64>() / n / h as f64;
        values.push((1.0 + 0.8 * cx + 0.5 * (1.0 - cy)) as f32);
    }
    // edge pixels inherit from the nearest labelled pixel in BFS order
    let mut depth: Vec<f32> = label.iter().map(|&l| if l == usize::MAX { f32::NAN } else { values[l] }).collect();
    if values.is_empty() {
        return DepthMap::constant(w, h, 1.0);
    }
    queue.extend((0..w * h).filter(|&i| !edge[i]));
    while let Some(i) = queue.pop_front() {
        for j in neighbours4(i, w, h) {
            if depth[j].is_nan() {
                depth[j] = depth[i];
                queue.push_back(j);
            }
        }
    }
    DepthMap::new(w, h, depth).expect("every pixel is reached")
}

fn neighbours4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

/// Runs the edge stage on `image` and the stand-in estimators on the image,
/// the edge image and the edge-highlighted image, giving `(D, D_e, D_eh)`.
pub fn standin_depths(
    image: &Image,
    source: &EdgeSource,
    config: &HybridEdgeConfig,
) -> Result<(EdgeStage, [DepthMap; 3])> {
    let stage = edge_stage(image, source, config)?;
    let depths = [
        mde_standin(image),
        edge_depth_standin(&stage.edge_image),
        mde_standin(&stage.highlighted),
    ];
    Ok((stage, depths))
}

/// Depth inputs for the sharpening experiment: `(D, D_e, D_eh)` with `D`
/// and `D_eh` blurred versions of the ground truth and `D_e` a sharp but
/// nonlinearly distorted one.
pub fn sharpening_inputs(scene: &Scene) -> (DepthMap, DepthMap, DepthMap) {
    let gt = &scene.gt;
    let (w, h) = gt.dims();
    let d = blur_depth(gt, 3.0);
    let d_edge = DepthMap::from_fn(w, h, |x, y| {
        let v = gt.at(x, y);
        0.3 * v * v + 0.2 * (std::f32::consts::PI * y as f32 / h as f32).sin() + 0.5
    });
    let d_eh = blur_depth(gt, 2.5).map(|v| v + 0.05);
    (d, d_edge, d_eh)
}

/// Scene depth with `count` small squares (2 to 4 pixels wide) brought
/// nearer by 0.4 to 0.7.
pub fn with_fine_detail(gt: &DepthMap, count: usize, seed: u64) -> DepthMap {
    let (w, h) = gt.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let squares: Vec<(usize, usize, usize, f32)> = (0..count)
        .map(|_| {
            let side = rng.random_range(2..=4);
            (rng.random_range(1..w - side - 1), rng.random_range(1..h - side - 1), side, rng.random_range(0.4f32..0.7))
        })
        .collect();
    DepthMap::from_fn(w, h, |x, y| {
        let lift = squares
            .iter()
            .filter(|&&(x0, y0, s, _)| (x0..x0 + s).contains(&x) && (y0..y0 + s).contains(&y))
            .map(|q| q.3)
            .fold(0.0f32, f32::max);
        gt.at(x, y) - lift
    })
}

/// Pseudo-labelled pairs built from scenes with fine detail: a blurred
/// (coarse) depth that loses the detail, a sharp but distorted (detailed)
/// depth, and the guided-filter label.
pub fn toy_lfm_dataset(count: usize, size: usize, seed: u64) -> Result<Vec<LfmSample>> {
    (0..count)
        .map(|i| {
            let id = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let gt = with_fine_detail(&scene(id, size, size).gt, size * size / 40, id ^ 0xf1e);
            let lo = blur_depth(&gt, 1.5);
            let hi = gt.map(|v| 0.4 * v * v + 0.3);
            let ((lo, hi), label) = make_pseudo_pair(&lo, &hi, &GuidedFilterParams::for_width(size))?;
            Ok(LfmSample { lo, hi, label })
        })
        .collect()
}

/// Scale groups whose members are the ground truth blurred progressively
/// less (σ from 2.5 down to 0.5) plus a per-member offset in ±0.08, with
/// zero flows.
pub fn toy_dcm_dataset(count: usize, size: usize, seed: u64) -> Result<Vec<ScaleGroup>> {
    const SIGMAS: [f32; GROUP_SIZE] = [2.5, 2.0, 1.5, 1.0, 0.5];
    (0..count)
        .map(|i| {
            let s = scene(seed.wrapping_mul(1000).wrapping_add(500 + i as u64), size, size);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37));
            let depths = SIGMAS
                .iter()
                .map(|&sigma| {
                    let offset = rng.random_range(-0.08f32..0.08);
                    blur_depth(&s.gt, sigma).map(|v| v + offset)
                })
                .collect();
            Ok(ScaleGroup::new(depths)?.with_zero_flows())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::depth_edge_mask;

    #[test]
    fn scenes_are_deterministic_and_positive() {
        let a = scene(3, 64, 48);
        assert_eq!(a, scene(3, 64, 48));
        assert_ne!(a, scene(4, 64, 48));
        assert!(a.gt.data().iter().all(|&v| v > 0.3));
        assert!(a.band.0 < a.band.1);
    }

    #[test]
    fn rise_of_sharp_and_ramp_profiles() {
        let sharp = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert!((rise_distance(&sharp).unwrap() - 0.8).abs() < 1e-12);
        let ramp: Vec<f32> = (0..13).map(|i| ((i as f32 - 3.0) / 6.0).clamp(0.0, 1.0)).collect();
        assert!((rise_distance(&ramp).unwrap() - 4.8).abs() < 1e-6);
        assert!(rise_distance(&[1.0; 8]).is_none());
        let falling: Vec<f32> = sharp.iter().map(|v| 1.0 - v).collect();
        assert!((rise_distance(&falling).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn blur_widens_the_step() {
        let s = scene(1, 96, 96);
        let sharp = step_rise(&s.gt, &s, 12).unwrap();
        let blurred = step_rise(&blur_depth(&s.gt, 3.0), &s, 12).unwrap();
        assert!(sharp < 1.0 && blurred > 3.0, "{sharp} {blurred}");
    }

    #[test]
    fn mde_standin_recovers_depth_and_fills_holes() {
        let s = scene(2, 64, 64);
        let d = mde_standin(&s.image);
        let far = (s.gt.at(5, 32) - d.at(5, 32)).abs();
        assert!(far < 0.2, "{far}");
        let mut data = s.image.data().to_vec();
        for y in 0..64 {
            let i = (y * 64 + s.step_x) * 3;
            data[i..i + 3].fill(0.0);
        }
        let holed = mde_standin(&Image::new(64, 64, data).unwrap());
        let v = holed.at(s.step_x, 32);
        let (a, b) = (d.at(s.step_x - 3, 32), d.at(s.step_x + 3, 32));
        assert!(v >= a.min(b) - 0.1 && v <= a.max(b) + 0.1);
    }

    #[test]
    fn edge_depth_standin_makes_steps_at_edges() {
        let img = Image::from_fn(20, 10, |x, _| if x == 9 { [1.0; 3] } else { [0.0; 3] });
        let d = edge_depth_standin(&img);
        assert_ne!(d.at(2, 5), d.at(15, 5));
        assert_eq!(d.at(0, 0), d.at(8, 9));
        assert!(d.data().iter().all(|v| v.is_finite()));
        let all_edge = edge_depth_standin(&Image::filled(4, 4, [1.0; 3]));
        assert!(all_edge.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn toy_datasets_have_expected_shapes() {
        let l = toy_lfm_dataset(2, 48, 7).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].lo.dims(), (48, 48));
        let g = toy_dcm_dataset(2, 40, 11).unwrap();
        assert_eq!(g[0].depths.len(), GROUP_SIZE);
        assert!(g[0].flows.iter().all(|f| f.as_ref().is_some_and(|f| f.is_zero())));
        assert_eq!(g, toy_dcm_dataset(2, 40, 11).unwrap());
    }

    #[test]
    fn depth_mask_marks_the_step() {
        let s = scene(5, 64, 64);
        let m = depth_edge_mask(&s.gt, 0.3).unwrap();
        let y = (s.band.0 + s.band.1) / 2;
        assert!(m.at(s.step_x, y) || m.at(s.step_x - 1, y));
        assert!(!m.at(2, y));
    }
}
