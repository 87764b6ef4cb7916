//! Two-stream fusion network for the second fusion stage.
//!
//! Each stream encodes one input with `depth_levels` convolutions (the first
//! at full resolution, the rest stride 2, channels doubling per level). The
//! two bottlenecks are concatenated and decoded by one convolution, upsampled
//! to full resolution, joined with both streams' full-resolution features and
//! mapped to a single-channel residual by a final convolution with neither
//! normalization nor activation.
//!
//! Inputs are standardized with the trimmed mean and deviation of the
//! original depth. The output is `d_original + σ·r`, so a zero final layer
//! returns `d_original` exactly.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{trimmed_stats, ILNR_TRIM};
use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, Raster};
use crate::nn::layers::{add_conv, add_norm, conv, norm};
use crate::nn::{BoundParams, LayerInit, ParamSet, Tape, Tensor, Var};
use crate::sampling::resize_taps;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionNetSpec {
    pub base_channels: usize,
    pub depth_levels: usize,
    /// Group count of the group normalizations.
    pub groups: usize,
    pub slope: f32,
}

impl Default for FusionNetSpec {
    fn default() -> Self {
        Self {
            base_channels: 32,
            depth_levels: 4,
            groups: 8,
            slope: 0.2,
        }
    }
}

impl FusionNetSpec {
    pub const KERNEL: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 8 {
            return Err(Error::Config(format!("base_channels {} must be >= 8", self.base_channels)));
        }
        if self.depth_levels < 1 {
            return Err(Error::Config("depth_levels must be >= 1".into()));
        }
        if self.groups < 1 || self.base_channels % self.groups != 0 {
            return Err(Error::Config(format!(
                "group count {} must divide base_channels {}",
                self.groups, self.base_channels
            )));
        }
        if !(self.slope >= 0.0) {
            return Err(Error::Config(format!("leaky slope {} must be >= 0", self.slope)));
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Learnable convolution layers: both encoders, the decoder and the head.
    pub fn layer_count(&self) -> usize {
        2 * self.depth_levels + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet {
    spec: FusionNetSpec,
    params: ParamSet,
}

impl FusionNet {
    /// Kaiming-initialized encoders and decoder, zero final layer.
    pub fn init(spec: FusionNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let k = FusionNetSpec::KERNEL;
        for stream in ["a", "b"] {
            for l in 0..spec.depth_levels {
                let ci = if l == 0 { 1 } else { spec.channels(l - 1) };
                let co = spec.channels(l);
                add_conv(&mut p, &format!("{stream}{l}"), ci, co, k, LayerInit::Kaiming, &mut rng);
                add_norm(&mut p, &format!("{stream}{l}.n"), co);
            }
        }
        let bottleneck = 2 * spec.channels(spec.depth_levels - 1);
        add_conv(&mut p, "dec", bottleneck, spec.base_channels, k, LayerInit::Kaiming, &mut rng);
        add_norm(&mut p, "dec.n", spec.base_channels);
        add_conv(&mut p, "out", 3 * spec.base_channels, 1, k, LayerInit::Zero, &mut rng);
        Ok(Self { spec, params: p })
    }

    /// Wraps loaded weights after checking them against the spec layout.
    pub fn from_params(spec: FusionNetSpec, params: ParamSet) -> Result<Self> {
        let reference = Self::init(spec, 0)?;
        params.check_layout(&reference.params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &FusionNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    /// Records the network on `tape`; returns the `[1, H, W]` residual.
    pub(crate) fn forward(&self, tape: &mut Tape, p: &BoundParams, xa: Var, xb: Var) -> Var {
        let s = &self.spec;
        let (_, h, w) = tape.value(xa).chw();
        let mut skips = Vec::new();
        let mut bottlenecks = Vec::new();
        for (stream, x0) in [("a", xa), ("b", xb)] {
            let mut x = x0;
            for l in 0..s.depth_levels {
                let stride = if l == 0 { 1 } else { 2 };
                let name = format!("{stream}{l}");
                x = conv(tape, p, &name, x, stride, 1);
                x = norm(tape, p, &format!("{name}.n"), x, s.groups);
                x = tape.leaky_relu(x, s.slope);
                if l == 0 {
                    skips.push(x);
                }
            }
            bottlenecks.push(x);
        }
        let merged = tape.concat(&bottlenecks);
        let mut y = conv(tape, p, "dec", merged, 1, 1);
        y = norm(tape, p, "dec.n", y, s.groups);
        y = tape.leaky_relu(y, s.slope);
        let (_, bh, bw) = tape.value(y).chw();
        if (bh, bw) != (h, w) {
            y = tape.resample(y, Rc::new(resize_taps(bw, bh, w, h)), h, w);
        }
        let joined = tape.concat(&[y, skips[0], skips[1]]);
        conv(tape, p, "out", joined, 1, 1)
    }

    /// Standardization of both inputs by the trimmed statistics of the
    /// original depth (unit deviation when it is degenerate).
    pub(crate) fn standardization(d_original: &DepthMap) -> (f64, f64) {
        match trimmed_stats(d_original, ILNR_TRIM) {
            Ok((m, s)) if s > 0.0 => (m, s),
            Ok((m, _)) => (m, 1.0),
            Err(_) => (0.0, 1.0),
        }
    }

    pub(crate) fn standardize(map: &DepthMap, mean: f64, std: f64) -> Tensor {
        let (w, h) = map.dims();
        Tensor::from_vec(
            &[1, h, w],
            map.data().iter().map(|&v| ((v as f64 - mean) / std) as f32).collect(),
        )
    }

    /// Fuses the original depth with the stage-1 result.
    pub fn fuse(&self, d_original: &DepthMap, d_stage1: &DepthMap) -> Result<DepthMap> {
        check_shape(d_original.dims(), d_stage1.dims())?;
        let (mean, std) = Self::standardization(d_original);
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let xa = tape.leaf(Self::standardize(d_original, mean, std));
        let xb = tape.leaf(Self::standardize(d_stage1, mean, std));
        let r = self.forward(&mut tape, &bound, xa, xb);
        let residual = tape.value(r).data();
        let (w, h) = d_original.dims();
        let data = d_original
            .data()
            .iter()
            .zip(residual)
            .map(|(&d, &r)| d + (std * r as f64) as f32)
            .collect();
        let mut out = DepthMap::from_computed(w, h, data);
        out.set_valid_mask(d_original.valid_mask().map(<[bool]>::to_vec))?;
        Ok(out)
    }
}
