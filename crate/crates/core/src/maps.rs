//! Raster containers shared by every stage of the pipeline.
//!
//! All maps are row-major with the origin at the top-left pixel. Depth maps
//! live in depth space (larger = farther).

use crate::error::{Error, Result};

/// Anything with a pixel grid.
pub trait Raster {
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }
}

macro_rules! impl_raster {
    ($($t:ty),*) => {$(
        impl Raster for $t {
            fn width(&self) -> usize { self.width }
            fn height(&self) -> usize { self.height }
        }
    )*};
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<()> {
    if len != expected {
        return Err(Error::arg(format!(
            "{what}: data length {len} does not match expected {expected}"
        )));
    }
    Ok(())
}

/// RGB image with interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(data.len(), width * height * 3, "image")?;
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::arg(format!(
                "image value {} at index {i} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let rgb = rgb.map(|v| v.clamp(0.0, 1.0));
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps data that the caller guarantees is in range. Values are clamped.
    pub(crate) fn from_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Self {
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Luminance with the broadcast weights 0.299 / 0.587 / 0.114.
    pub fn luminance(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + x) * 3;
                let dst = (x * h + y) * 3;
                data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        Self {
            width: h,
            height: w,
            data,
        }
    }

    /// Copies the rectangle `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        check_crop(self.dims(), x0, y0, w, h)?;
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

fn check_crop(dims: (usize, usize), x0: usize, y0: usize, w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 || x0 + w > dims.0 || y0 + h > dims.1 {
        return Err(Error::arg(format!(
            "crop {w}x{h}+{x0}+{y0} does not fit a {}x{} map",
            dims.0, dims.1
        )));
    }
    Ok(())
}

/// Single-channel depth map with an optional validity mask.
///
/// Every value is finite. Invalid pixels (mask `false`) are excluded from
/// statistics; non-negativity of valid depth is checked at ingestion with
/// [`DepthMap::ensure_nonnegative`], since intermediate filter outputs may
/// overshoot slightly.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
    valid: Option<Vec<bool>>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(data.len(), width * height, "depth map")?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("depth value at index {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            data,
            valid: None,
        })
    }

    pub fn with_mask(width: usize, height: usize, data: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        check_len(data.len(), width * height, "depth map")?;
        check_len(valid.len(), width * height, "depth validity mask")?;
        if let Some(i) = (0..data.len()).find(|&i| valid[i] && !data[i].is_finite()) {
            return Err(Error::arg(format!("valid depth value at index {i} is not finite")));
        }
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect();
        Ok(Self {
            width,
            height,
            data,
            valid: Some(valid),
        })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            valid: None,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("depth closure produced a non-finite value")
    }

    /// Wraps computed data, replacing any non-finite value by zero.
    pub(crate) fn from_computed(width: usize, height: usize, mut data: Vec<f32>) -> Self {
        for v in &mut data {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        Self {
            width,
            height,
            data,
            valid: None,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn set_valid_mask(&mut self, valid: Option<Vec<bool>>) -> Result<()> {
        if let Some(v) = &valid {
            check_len(v.len(), self.pixel_count(), "depth validity mask")?;
        }
        self.valid = valid;
        Ok(())
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid.as_ref().map_or(true, |v| v[i])
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Minimum and maximum over valid pixels, `None` if no pixel is valid.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        let mut it = (0..self.data.len()).filter(|&i| self.is_valid(i)).map(|i| self.data[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn ensure_nonnegative(&self) -> Result<()> {
        match (0..self.data.len()).find(|&i| self.is_valid(i) && self.data[i] < 0.0) {
            Some(i) => Err(Error::arg(format!(
                "negative depth {} at pixel ({}, {})",
                self.data[i],
                i % self.width,
                i / self.width
            ))),
            None => Ok(()),
        }
    }

    /// Applies `f` to every value, keeping the mask.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn zip_map(&self, other: &DepthMap, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        crate::error::check_shape(self.dims(), other.dims())?;
        Ok(Self::from_computed(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn transpose(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        let mut valid = self.valid.as_ref().map(|_| vec![false; w * h]);
        for y in 0..h {
            for x in 0..w {
                data[x * h + y] = self.data[y * w + x];
                if let (Some(dst), Some(src)) = (valid.as_mut(), self.valid.as_ref()) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
        Self {
            width: h,
            height: w,
            data,
            valid,
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        check_crop(self.dims(), x0, y0, w, h)?;
        let rows = |src: &[f32]| -> Vec<f32> {
            (y0..y0 + h)
                .flat_map(|y| src[y * self.width + x0..y * self.width + x0 + w].iter().copied())
                .collect()
        };
        let valid = self.valid.as_ref().map(|v| {
            (y0..y0 + h)
                .flat_map(|y| v[y * self.width + x0..y * self.width + x0 + w].iter().copied())
                .collect()
        });
        Ok(Self {
            width: w,
            height: h,
            data: rows(&self.data),
            valid,
        })
    }
}

/// Edge strength map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(data.len(), width * height, "edge map")?;
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::arg(format!(
                "edge value {} at index {i} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub(crate) fn from_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Self {
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn transpose(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[x * h + y] = self.data[y * w + x];
            }
        }
        Self {
            width: h,
            height: w,
            data,
        }
    }

    /// Greyscale rendering (edge strength replicated over RGB).
    pub fn to_image(&self) -> Image {
        Image::from_clamped(
            self.width,
            self.height,
            self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(data.len(), width * height, "binary mask")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_image(&self) -> Image {
        Image::from_clamped(
            self.width,
            self.height,
            self.data
                .iter()
                .flat_map(|&b| if b { [1.0; 3] } else { [0.0; 3] })
                .collect(),
        )
    }
}

/// Dense per-pixel displacement `(dx, dy)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        check_len(data.len(), width * height, "flow field")?;
        if let Some(i) = data.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::arg(format!("flow vector at index {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Self {
            width,
            height,
            data: vec![[dx, dy]; width * height],
        }
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v[0] == 0.0 && v[1] == 0.0)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        check_crop(self.dims(), x0, y0, w, h)?;
        let data = (y0..y0 + h)
            .flat_map(|y| self.data[y * self.width + x0..y * self.width + x0 + w].iter().copied())
            .collect();
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

impl_raster!(Image, DepthMap, EdgeMap, BinaryMask, FlowField);
