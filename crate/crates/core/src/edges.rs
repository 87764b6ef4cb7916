//! Hybrid edge detection: Sobel magnitude, geometric-mean fusion with an
//! externally supplied learned edge map, tiled high-resolution extraction,
//! binarization and edge-highlighted image synthesis.

use crate::error::{check_shape, Error, Result};
use crate::maps::{BinaryMask, EdgeMap, Image, Raster};
use crate::sampling::resize_bilinear;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridEdgeConfig {
    /// Root order of the geometric-mean fusion.
    pub n_root: u32,
    /// Tiles per side for [`patched_edges`].
    pub grid: usize,
    /// Upsampling factor applied to each tile before the provider runs.
    pub patch_scale: usize,
    pub binarize_threshold: f32,
}

impl Default for HybridEdgeConfig {
    fn default() -> Self {
        Self {
            n_root: 2,
            grid: 3,
            patch_scale: 3,
            binarize_threshold: 0.3,
        }
    }
}

impl HybridEdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_root < 1 {
            return Err(Error::Config("n_root must be >= 1".into()));
        }
        if self.grid < 1 || self.patch_scale < 1 {
            return Err(Error::Config("grid and patch_scale must be >= 1".into()));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarize_threshold {} must lie in (0, 1)",
                self.binarize_threshold
            )));
        }
        Ok(())
    }
}

/// Raw Sobel gradients `(gx, gy)` of a single-channel plane with replicated
/// borders.
pub(crate) fn sobel_gradients(plane: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: i64, y: i64| -> f32 {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        plane[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            // Both components accumulate in the same order so the operator
            // commutes exactly with transposition.
            let sx = (at(x + 1, y - 1) - at(x - 1, y - 1))
                + 2.0 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1));
            let sy = (at(x - 1, y + 1) - at(x - 1, y - 1))
                + 2.0 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
        }
    }
    (gx, gy)
}

/// Unnormalized Sobel gradient magnitude of the image luminance.
pub fn sobel_raw_magnitude(image: &Image) -> Vec<f32> {
    let (w, h) = image.dims();
    let (gx, gy) = sobel_gradients(&image.luminance(), w, h);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect()
}

/// Sobel magnitude normalized by its per-image maximum (all zero when the
/// image has no gradient).
pub fn sobel_magnitude(image: &Image) -> EdgeMap {
    let (w, h) = image.dims();
    let mut mag = sobel_raw_magnitude(image);
    let max = mag.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        for v in &mut mag {
            *v /= max;
        }
    }
    EdgeMap::from_clamped(w, h, mag)
}

/// Per-pixel `(E_b · E_s)^(1/N)`.
pub fn hybrid_fuse(learned: &EdgeMap, sobel: &EdgeMap, config: &HybridEdgeConfig) -> Result<EdgeMap> {
    check_shape(learned.dims(), sobel.dims())?;
    if config.n_root < 1 {
        return Err(Error::Config("n_root must be >= 1".into()));
    }
    let n = config.n_root;
    let data = learned
        .data()
        .iter()
        .zip(sobel.data())
        .map(|(&b, &s)| {
            let p = b as f64 * s as f64;
            let v = match n {
                1 => p,
                2 => p.sqrt(),
                _ => p.powf(1.0 / n as f64),
            };
            v as f32
        })
        .collect();
    Ok(EdgeMap::from_clamped(learned.width(), learned.height(), data))
}

/// Tile origins and extents along one axis; the remainder goes to the last tile.
fn tile_spans(len: usize, grid: usize) -> Result<Vec<(usize, usize)>> {
    let base = len / grid;
    if base == 0 {
        return Err(Error::arg(format!("cannot split {len} pixels into {grid} tiles")));
    }
    Ok((0..grid)
        .map(|i| {
            let start = i * base;
            let extent = if i + 1 == grid { len - start } else { base };
            (start, extent)
        })
        .collect())
}

/// Runs `provider` on `grid × grid` upsampled tiles and stitches the
/// downsampled results back at their original positions.
///
/// Tiles do not overlap and are not blended, so faint seams can appear at
/// tile borders.
pub fn patched_edges<F>(image: &Image, mut provider: F, config: &HybridEdgeConfig) -> Result<EdgeMap>
where
    F: FnMut(&Image) -> Result<EdgeMap>,
{
    config.validate()?;
    let (w, h) = image.dims();
    let cols = tile_spans(w, config.grid)?;
    let rows = tile_spans(h, config.grid)?;
    let mut out = vec![0.0f32; w * h];
    for &(y0, th) in &rows {
        for &(x0, tw) in &cols {
            let tile = image.crop(x0, y0, tw, th)?;
            let (uw, uh) = (tw * config.patch_scale, th * config.patch_scale);
            let up = resize_bilinear(&tile, uw, uh)?;
            let edges = provider(&up)?;
            if edges.dims() != (uw, uh) {
                return Err(Error::Provider(format!(
                    "edge provider returned {:?} for a {uw}x{uh} tile",
                    edges.dims()
                )));
            }
            let down = resize_bilinear(&edges, tw, th)?;
            for ty in 0..th {
                let dst = (y0 + ty) * w + x0;
                out[dst..dst + tw].copy_from_slice(&down.data()[ty * tw..(ty + 1) * tw]);
            }
        }
    }
    Ok(EdgeMap::from_clamped(w, h, out))
}

pub fn binarize(edge: &EdgeMap, threshold: f32) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::arg(format!("threshold {threshold} must lie in (0, 1)")));
    }
    BinaryMask::new(
        edge.width(),
        edge.height(),
        edge.data().iter().map(|&v| v >= threshold).collect(),
    )
}

/// Deletes (zeroes) the masked edge pixels in every channel.
pub fn edge_highlight(image: &Image, mask: &BinaryMask) -> Result<Image> {
    check_shape(image.dims(), mask.dims())?;
    let mut data = image.data().to_vec();
    for (i, &m) in mask.data().iter().enumerate() {
        if m {
            data[i * 3..i * 3 + 3].fill(0.0);
        }
    }
    Ok(Image::from_clamped(image.width(), image.height(), data))
}
