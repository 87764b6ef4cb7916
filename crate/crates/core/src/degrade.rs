//! Synthetic image degradations (additive Gaussian noise, Gaussian blur).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::maps::{Image, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    GaussianNoise,
    GaussianBlur,
}

impl std::str::FromStr for Degradation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-noise" => Ok(Self::GaussianNoise),
            "gaussian-blur" => Ok(Self::GaussianBlur),
            _ => Err(Error::arg(format!(
                "unknown degradation {s:?}; expected gaussian-noise or gaussian-blur"
            ))),
        }
    }
}

pub fn degrade(image: &Image, kind: Degradation, sigma: f32, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("sigma must be a finite value >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let data = match kind {
        Degradation::GaussianNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0f32, sigma).expect("sigma is positive and finite");
            image
                .data()
                .iter()
                .map(|&v| v + normal.sample(&mut rng))
                .collect()
        }
        Degradation::GaussianBlur => blur_interleaved(image.data(), w, h, 3, sigma),
    };
    Ok(Image::from_clamped(w, h, data))
}

/// Normalized Gaussian taps with radius `ceil(3σ)`.
pub(crate) fn gaussian_kernel(sigma: f32) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    let s = sigma as f64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * s * s)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with replicated borders over interleaved data.
pub(crate) fn blur_interleaved(src: &[f32], w: usize, h: usize, channels: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = clampi(x as i64 + k as i64 - r, w);
                    acc += kv * src[(y * w + sx) * channels + c] as f64;
                }
                tmp[(y * w + x) * channels + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = clampi(y as i64 + k as i64 - r, h);
                    acc += kv * tmp[(sy * w + x) * channels + c];
                }
                out[(y * w + x) * channels + c] = acc as f32;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f32 / 16.0;
            [v, 1.0 - v, 0.5]
        })
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = textured(9, 7);
        for kind in [Degradation::GaussianNoise, Degradation::GaussianBlur] {
            assert_eq!(degrade(&img, kind, 0.0, 1).unwrap(), img);
        }
    }

    #[test]
    fn negative_sigma_is_error() {
        assert!(degrade(&textured(2, 2), Degradation::GaussianBlur, -0.1, 0).is_err());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = Image::filled(11, 8, [0.25, 0.5, 0.75]);
        let out = degrade(&img, Degradation::GaussianBlur, 2.3, 0).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_radius_and_sum() {
        let k = gaussian_kernel(1.4);
        assert_eq!(k.len(), 2 * 5 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let img = Image::filled(256, 256, [0.5; 3]);
        let out = degrade(&img, Degradation::GaussianNoise, 0.05, 42).unwrap();
        let diffs: Vec<f64> = out.data().iter().map(|&v| v as f64 - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
        let std = var.sqrt();
        assert!((0.045..=0.055).contains(&std), "std {std}");
    }

    #[test]
    fn noise_is_reproducible_by_seed() {
        let img = textured(16, 16);
        let a = degrade(&img, Degradation::GaussianNoise, 0.1, 5).unwrap();
        let b = degrade(&img, Degradation::GaussianNoise, 0.1, 5).unwrap();
        let c = degrade(&img, Degradation::GaussianNoise, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
