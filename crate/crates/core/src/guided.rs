//! Box filter and the single-channel guided filter.
//!
//! Window statistics use shrinking windows at the borders (the divisor is the
//! number of pixels actually inside the clipped window). All accumulation is
//! done in `f64` through summed-area tables.

use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedFilterParams {
    pub radius: usize,
    pub eps: f64,
}

impl GuidedFilterParams {
    pub const DEFAULT_EPS: f64 = 1e-12;

    /// Radius of one twelfth of the map width (at least 1) with `eps = 1e-12`.
    pub fn for_width(width: usize) -> Self {
        Self {
            radius: (width / 12).max(1),
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::Config("guided filter radius must be >= 1".into()));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("guided filter eps {} must be > 0", self.eps)));
        }
        Ok(())
    }
}

/// Window mean over the clipped `(2r+1)²` neighbourhood of every pixel.
pub(crate) fn box_mean(plane: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += plane[y * w + x];
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let sum = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0]
                + sat[y0 * stride + x0];
            out[y * w + x] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

fn to_f64(map: &DepthMap) -> Vec<f64> {
    map.data().iter().map(|&v| v as f64).collect()
}

pub fn box_filter(map: &DepthMap, radius: usize) -> DepthMap {
    let (w, h) = map.dims();
    let mean = box_mean(&to_f64(map), w, h, radius);
    DepthMap::from_computed(w, h, mean.into_iter().map(|v| v as f32).collect())
}

/// He-style guided filter: `a = cov(I, p) / (var(I) + eps)`,
/// `b = mean(p) − a·mean(I)`, `q = mean(a)·I + mean(b)`.
pub fn guided_filter(guide: &DepthMap, input: &DepthMap, params: &GuidedFilterParams) -> Result<DepthMap> {
    check_shape(guide.dims(), input.dims())?;
    params.validate()?;
    let (w, h) = guide.dims();
    let r = params.radius;
    let g = to_f64(guide);
    let p = to_f64(input);
    let mean_g = box_mean(&g, w, h, r);
    let mean_p = box_mean(&p, w, h, r);
    let gg: Vec<f64> = g.iter().map(|v| v * v).collect();
    let gp: Vec<f64> = g.iter().zip(&p).map(|(a, b)| a * b).collect();
    let corr_gg = box_mean(&gg, w, h, r);
    let corr_gp = box_mean(&gp, w, h, r);

    let mut a = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    for i in 0..w * h {
        let var = (corr_gg[i] - mean_g[i] * mean_g[i]).max(0.0);
        let cov = corr_gp[i] - mean_g[i] * mean_p[i];
        a[i] = cov / (var + params.eps);
        b[i] = mean_p[i] - a[i] * mean_g[i];
    }
    let mean_a = box_mean(&a, w, h, r);
    let mean_b = box_mean(&b, w, h, r);
    let out = (0..w * h)
        .map(|i| (mean_a[i] * g[i] + mean_b[i]) as f32)
        .collect();
    let mut q = DepthMap::from_computed(w, h, out);
    if input.valid_mask().is_some() {
        q.set_valid_mask(input.valid_mask().map(<[bool]>::to_vec))?;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_map(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DepthMap::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..5.0)).collect()).unwrap()
    }

    fn brute_window_mean(map: &DepthMap, r: usize) -> Vec<f64> {
        let (w, h) = map.dims();
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut s, mut n) = (0.0f64, 0usize);
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        s += map.at(xx, yy) as f64;
                        n += 1;
                    }
                }
                out[y * w + x] = s / n as f64;
            }
        }
        out
    }

    #[test]
    fn box_filter_examples() {
        let c = DepthMap::constant(6, 5, 2.5);
        assert!(box_filter(&c, 2).data().iter().all(|&v| v == 2.5));
        let m = DepthMap::new(3, 1, vec![0.0, 3.0, 0.0]).unwrap();
        assert_eq!(box_filter(&m, 1).data(), &[1.5, 1.0, 1.5]);
    }

    #[test]
    fn box_filter_matches_brute_force() {
        let m = random_map(32, 32, 11);
        for r in [1, 3, 40] {
            let fast = box_filter(&m, r);
            let slow = brute_window_mean(&m, r);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((*a as f64 - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_input_is_exact() {
        let guide = random_map(20, 15, 2);
        let input = DepthMap::constant(20, 15, 3.25);
        let out = guided_filter(&guide, &input, &GuidedFilterParams { radius: 3, eps: 1e-3 }).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn self_guidance_is_near_identity() {
        let m = random_map(24, 24, 3);
        let out = guided_filter(&m, &m, &GuidedFilterParams { radius: 2, eps: 1e-12 }).unwrap();
        let (lo, hi) = m.min_max().unwrap();
        let tol = 1e-4 * (hi - lo);
        for (a, b) in out.data().iter().zip(m.data()) {
            assert!((a - b).abs() < tol);
        }
    }

    #[test]
    fn linear_in_input() {
        let g = random_map(16, 16, 4);
        let p = random_map(16, 16, 5);
        let q = random_map(16, 16, 6);
        let params = GuidedFilterParams { radius: 2, eps: 1e-2 };
        let combo = p.zip_map(&q, |a, b| 2.0 * a - 0.5 * b).unwrap();
        let lhs = guided_filter(&g, &combo, &params).unwrap();
        let fp = guided_filter(&g, &p, &params).unwrap();
        let fq = guided_filter(&g, &q, &params).unwrap();
        for i in 0..256 {
            let rhs = 2.0 * fp.data()[i] as f64 - 0.5 * fq.data()[i] as f64;
            assert!((lhs.data()[i] as f64 - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_params_and_shapes() {
        let a = random_map(4, 4, 1);
        let b = random_map(5, 4, 1);
        assert!(guided_filter(&a, &b, &GuidedFilterParams::for_width(4)).is_err());
        assert!(guided_filter(&a, &a, &GuidedFilterParams { radius: 0, eps: 1e-3 }).is_err());
        assert!(guided_filter(&a, &a, &GuidedFilterParams { radius: 1, eps: 0.0 }).is_err());
        assert_eq!(GuidedFilterParams::for_width(1024).radius, 85);
        assert_eq!(GuidedFilterParams::for_width(5).radius, 1);
    }
}
