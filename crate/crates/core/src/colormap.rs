//! Depth colourization used for visualization and for the colour-space flow
//! between depth maps.

#[path = "colormap_table.rs"]
mod table;

pub use table::TURBO;

use crate::maps::{DepthMap, Image, Raster};

/// Min-max normalizes valid pixels and looks each one up in [`TURBO`].
///
/// A constant map uses entry 0 everywhere. Invalid pixels are black.
pub fn colorize(depth: &DepthMap) -> Image {
    let (lo, hi) = depth.min_max().unwrap_or((0.0, 0.0));
    let range = hi as f64 - lo as f64;
    let mut data = Vec::with_capacity(depth.pixel_count() * 3);
    for (i, &v) in depth.data().iter().enumerate() {
        if !depth.is_valid(i) {
            data.extend([0.0; 3]);
            continue;
        }
        let idx = if range > 0.0 {
            (((v as f64 - lo as f64) / range) * 255.0).round().clamp(0.0, 255.0) as usize
        } else {
            0
        };
        data.extend(TURBO[idx].map(|c| c as f32 / 255.0));
    }
    Image::from_clamped(depth.width(), depth.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(c: [u8; 3]) -> [f32; 3] {
        c.map(|v| v as f32 / 255.0)
    }

    #[test]
    fn endpoints_and_equal_values() {
        let d = DepthMap::new(4, 1, vec![2.0, 7.0, 2.0, 4.0]).unwrap();
        let img = colorize(&d);
        assert_eq!(img.pixel(0, 0), rgb(TURBO[0]));
        assert_eq!(img.pixel(1, 0), rgb(TURBO[255]));
        assert_eq!(img.pixel(0, 0), img.pixel(2, 0));
    }

    #[test]
    fn constant_map_is_uniform_entry_zero() {
        let img = colorize(&DepthMap::constant(3, 3, 1.5));
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(img.pixel(x, y), rgb(TURBO[0]));
            }
        }
    }

    #[test]
    fn table_runs_blue_to_red() {
        let first = TURBO[0];
        let last = TURBO[255];
        assert!(first[2] > first[0]);
        assert!(last[0] > last[2]);
    }
}
