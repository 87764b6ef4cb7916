use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::maps::{Image, Raster};

/// Loads an 8-bit RGB (or RGBA, alpha dropped) PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_png(&bytes)
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::codec(0, format!("PNG decode failed: {e}")))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        DynamicImage::ImageRgba8(rgba) => DynamicImage::ImageRgba8(rgba).to_rgb8(),
        other => {
            return Err(Error::codec(
                0,
                format!("unsupported PNG pixel layout {:?}; expected 8-bit RGB", other.color()),
            ))
        }
    };
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Image::new(w as usize, h as usize, data)
}

/// Quantizes with round-to-nearest and writes an 8-bit RGB PNG.
pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    super::write_atomic(path.as_ref(), &encode_png(image)?)
}

pub(crate) fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let raw: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = RgbImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .ok_or_else(|| Error::arg("image buffer size mismatch"))?;
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::codec(0, format!("PNG encode failed: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn round_trip(img: &Image) -> Image {
        decode_png(&encode_png(img).unwrap()).unwrap()
    }

    #[test]
    fn extremes_round_trip_exactly() {
        for v in [0.0, 1.0] {
            let img = Image::filled(5, 3, [v; 3]);
            assert_eq!(round_trip(&img), img);
        }
    }

    #[test]
    fn random_image_within_half_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let img = Image::from_fn(17, 11, |_, _| [rng.random(), rng.random(), rng.random()]);
        let back = round_trip(&img);
        let max = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        // quantization oracle: round(v * 255) / 255
        assert!(max <= 1.0 / 510.0 + 1e-7, "max diff {max}");
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_eq!(*b, (a * 255.0).round() / 255.0);
        }
    }

    #[test]
    fn sixteen_bit_png_is_rejected() {
        let buf = image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(1, 1, vec![1u16, 2, 3]).unwrap();
        let mut bytes = Vec::new();
        buf.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png).unwrap();
        assert!(matches!(decode_png(&bytes), Err(Error::Codec { .. })));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_png(b"not a png").is_err());
    }
}
