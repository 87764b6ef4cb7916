//! Residual encoder-decoder for depth consistency refinement.
//!
//! The two input depths are min-max normalized jointly, stacked as two
//! channels and reflect-padded to a multiple of `2^down_stages`. A stride-1
//! stem and `down_stages` stride-2 convolutions encode, `res_blocks` residual
//! blocks transform, and `up_stages` transposed convolutions decode with
//! additive encoder skips. A final convolution over the decoded features and
//! the normalized inputs, without normalization, feeds a tanh. Every other
//! layer uses instance normalization and leaky ReLU.
//!
//! The residual is `residual_scale · tanh(·)` in depth units, so a zero final
//! layer yields an exactly zero residual.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_shape, Error, Result};
use crate::maps::{DepthMap, Raster};
use crate::nn::layers::{add_conv, add_conv_transpose, add_norm, conv, conv_transpose, norm};
use crate::nn::{BoundParams, LayerInit, ParamSet, Tape, Tensor, Var};

pub const DEFAULT_RESIDUAL_SCALE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcmNetSpec {
    pub base_channels: usize,
    pub down_stages: usize,
    pub res_blocks: usize,
    pub up_stages: usize,
    pub slope: f32,
}

impl Default for DcmNetSpec {
    fn default() -> Self {
        Self {
            base_channels: 32,
            down_stages: 2,
            res_blocks: 5,
            up_stages: 2,
            slope: 0.2,
        }
    }
}

impl DcmNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 1 {
            return Err(Error::Config("base_channels must be >= 1".into()));
        }
        if self.down_stages != self.up_stages {
            return Err(Error::Config(format!(
                "up_stages {} must equal down_stages {} for the skip connections",
                self.up_stages, self.down_stages
            )));
        }
        if !(self.slope >= 0.0) {
            return Err(Error::Config(format!("leaky slope {} must be >= 0", self.slope)));
        }
        Ok(())
    }

    /// Spatial multiple the padded input must have.
    pub fn size_multiple(&self) -> usize {
        1 << self.down_stages
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Networks that record a pre-activation residual map on a tape.
pub(crate) trait TapeModel {
    /// `x` is `[2, H, W]` (normalized `d_a`, `d_b`); returns `[1, H, W]`.
    fn record(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var;
}

/// Records `residual_scale · tanh(model(norm(a), norm(b)))` where `norm`
/// is the joint min-max normalization of the pair.
pub(crate) fn record_residual(
    model: &impl TapeModel,
    tape: &mut Tape,
    p: &BoundParams,
    a: Var,
    b: Var,
    residual_scale: f32,
) -> Var {
    let x = tape.joint_normalize(a, b);
    let z = model.record(tape, p, x);
    let t = tape.tanh(z);
    tape.affine(t, residual_scale, 0.0)
}

/// Reflection without edge repetition, clamped for tiny extents.
fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else if n >= 2 {
        let period = 2 * (n - 1);
        let m = i % period;
        if m < n {
            m
        } else {
            period - m
        }
    } else {
        0
    }
}

fn pad_index(c: usize, h: usize, w: usize, ph: usize, pw: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for y in 0..ph {
            let sy = reflect(y, h);
            for x in 0..pw {
                idx.push((ch * h * w + sy * w + reflect(x, w)) as u32);
            }
        }
    }
    idx
}

fn crop_index(h: usize, w: usize, pw: usize) -> Vec<u32> {
    (0..h).flat_map(|y| (0..w).map(move |x| (y * pw + x) as u32)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcmNet {
    spec: DcmNetSpec,
    params: ParamSet,
}

impl DcmNet {
    /// Kaiming-initialized body, zero final layer.
    pub fn init(spec: DcmNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let c0 = spec.base_channels;
        add_conv(&mut p, "stem", 2, c0, 3, LayerInit::Kaiming, &mut rng);
        add_norm(&mut p, "stem.n", c0);
        for l in 1..=spec.down_stages {
            let name = format!("down{l}");
            add_conv(&mut p, &name, spec.channels(l - 1), spec.channels(l), 3, LayerInit::Kaiming, &mut rng);
            add_norm(&mut p, &format!("{name}.n"), spec.channels(l));
        }
        let cb = spec.channels(spec.down_stages);
        for r in 0..spec.res_blocks {
            for half in 1..=2 {
                let name = format!("res{r}.{half}");
                add_conv(&mut p, &name, cb, cb, 3, LayerInit::Kaiming, &mut rng);
                add_norm(&mut p, &format!("{name}.n"), cb);
            }
        }
        for u in (1..=spec.up_stages).rev() {
            let name = format!("up{u}");
            add_conv_transpose(&mut p, &name, spec.channels(u), spec.channels(u - 1), 4, &mut rng);
            add_norm(&mut p, &format!("{name}.n"), spec.channels(u - 1));
        }
        add_conv(&mut p, "out", c0 + 2, 1, 3, LayerInit::Zero, &mut rng);
        Ok(Self { spec, params: p })
    }

    /// Wraps loaded weights after checking them against the spec layout.
    pub fn from_params(spec: DcmNetSpec, params: ParamSet) -> Result<Self> {
        let reference = Self::init(spec, 0)?;
        params.check_layout(&reference.params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &DcmNetSpec {
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

    /// Residual for updating `d_a` given `d_b`; bounded by `residual_scale`.
    pub fn residual(&self, d_a: &DepthMap, d_b: &DepthMap, residual_scale: f32) -> Result<DepthMap> {
        check_shape(d_a.dims(), d_b.dims())?;
        if !(residual_scale > 0.0 && residual_scale.is_finite()) {
            return Err(Error::arg(format!("residual_scale {residual_scale} must be positive")));
        }
        let (w, h) = d_a.dims();
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let a = tape.leaf(Tensor::from_vec(&[1, h, w], d_a.data().to_vec()));
        let b = tape.leaf(Tensor::from_vec(&[1, h, w], d_b.data().to_vec()));
        let r = record_residual(self, &mut tape, &bound, a, b, residual_scale);
        let data = d_a
            .data()
            .iter()
            .zip(tape.value(r).data())
            .map(|(&base, &r)| fit_within(base, r, residual_scale))
            .collect();
        Ok(DepthMap::from_computed(w, h, data))
    }
}

/// Moves `r` toward zero until `base + r`, rounded to single precision,
/// differs from `base` by at most `bound`.
fn fit_within(base: f32, mut r: f32, bound: f32) -> f32 {
    while r != 0.0 && ((base + r) as f64 - base as f64).abs() > bound as f64 {
        r = if r > 0.0 { r.next_down() } else { r.next_up() };
    }
    r
}

impl TapeModel for DcmNet {
    fn record(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var {
        let s = &self.spec;
        let (c, h, w) = tape.value(x).chw();
        let m = s.size_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let x = if (ph, pw) != (h, w) {
            tape.gather(x, Rc::new(pad_index(c, h, w, ph, pw)), &[c, ph, pw])
        } else {
            x
        };
        let block = |tape: &mut Tape, name: &str, y: Var, stride: usize| {
            let y = conv(tape, p, name, y, stride, 1);
            let c = tape.value(y).chw().0;
            let y = norm(tape, p, &format!("{name}.n"), y, c);
            tape.leaky_relu(y, s.slope)
        };
        let mut skips = vec![block(tape, "stem", x, 1)];
        for l in 1..=s.down_stages {
            let prev = skips[l - 1];
            skips.push(block(tape, &format!("down{l}"), prev, 2));
        }
        let mut y = skips[s.down_stages];
        for r in 0..s.res_blocks {
            let t = block(tape, &format!("res{r}.1"), y, 1);
            let name = format!("res{r}.2");
            let t = conv(tape, p, &name, t, 1, 1);
            let c = tape.value(t).chw().0;
            let t = norm(tape, p, &format!("{name}.n"), t, c);
            y = tape.add(y, t);
        }
        for u in (1..=s.up_stages).rev() {
            let name = format!("up{u}");
            let t = conv_transpose(tape, p, &name, y, 2, 1);
            let c = tape.value(t).chw().0;
            let t = norm(tape, p, &format!("{name}.n"), t, c);
            let t = tape.leaky_relu(t, s.slope);
            y = tape.add(t, skips[u - 1]);
        }
        let joined = tape.concat(&[y, x]);
        let z = conv(tape, p, "out", joined, 1, 1);
        if (ph, pw) != (h, w) {
            tape.gather(z, Rc::new(crop_index(h, w, pw)), &[1, h, w])
        } else {
            z
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DcmNetSpec {
        DcmNetSpec {
            base_channels: 4,
            res_blocks: 2,
            ..DcmNetSpec::default()
        }
    }

    #[test]
    fn rounded_sums_respect_the_bound() {
        // 1.3 + 0.2 rounds up past the bound in single precision
        let (base, bound) = (1.3f32, 0.2f32);
        assert!(((base + bound) as f64 - base as f64) > bound as f64);
        for r in [bound, -bound, 0.1999, 0.0] {
            let fitted = fit_within(base, r, bound);
            assert!(((base + fitted) as f64 - base as f64).abs() <= bound as f64);
            assert!(fitted.abs() <= r.abs() && fitted.signum() == r.signum() || r == 0.0);
        }
        assert_eq!(fit_within(1.0, 0.1, 0.2), 0.1);
    }

    fn randomize(net: &mut DcmNet, magnitude: f32) {
        let mut k = 0u32;
        for t in net.params_mut().tensors_mut() {
            for v in t.data_mut() {
                k = k.wrapping_mul(1_103_515_245).wrapping_add(12_345);
                *v += magnitude * ((k >> 8) as f32 / (1u32 << 24) as f32 - 0.5);
            }
        }
    }

    fn pair(w: usize, h: usize) -> (DepthMap, DepthMap) {
        (
            DepthMap::from_fn(w, h, |x, y| 1.0 + (x as f32 * 0.4).sin() + y as f32 * 0.03),
            DepthMap::from_fn(w, h, |x, y| if x + y < w { 1.5 } else { 2.5 }),
        )
    }

    #[test]
    fn default_layout() {
        let net = DcmNet::init(DcmNetSpec::default(), 0).unwrap();
        let p = net.params();
        assert_eq!(p.iter().filter(|(n, _)| n.starts_with("res") && n.ends_with(".w")).count(), 10);
        assert_eq!(p.get("up2.w").unwrap().shape(), &[128, 64, 4, 4]);
        assert_eq!(p.get("up1.w").unwrap().shape(), &[64, 32, 4, 4]);
        assert!(p.get("out.n.g").is_none());
        assert!(p.get("out.w").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_gives_zero_residual_any_shape() {
        let net = DcmNet::init(small(), 1).unwrap();
        for (w, h) in [(16, 12), (13, 7), (1, 5)] {
            let (a, b) = pair(w, h);
            let r = net.residual(&a, &b, 0.2).unwrap();
            assert_eq!(r.dims(), (w, h));
            assert!(r.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn residual_is_bounded_and_deterministic() {
        let mut net = DcmNet::init(small(), 2).unwrap();
        randomize(&mut net, 20.0);
        let (a, b) = pair(15, 10);
        let r = net.residual(&a, &b, 0.3).unwrap();
        assert!(r.data().iter().all(|v| v.abs() <= 0.3));
        assert!(r.data().iter().any(|v| v.abs() > 0.1));
        assert_eq!(r, net.residual(&a, &b, 0.3).unwrap());
    }

    #[test]
    fn reflect_padding() {
        assert_eq!((0..8).map(|i| reflect(i, 4)).collect::<Vec<_>>(), vec![0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(3, 1), 0);
        let idx = pad_index(1, 2, 3, 4, 4);
        assert_eq!(&idx[..4], &[0, 1, 2, 1]);
        assert_eq!(&idx[8..12], &[0, 1, 2, 1]);
    }

    #[test]
    fn layout_checks() {
        assert!(DcmNetSpec { up_stages: 1, ..small() }.validate().is_err());
        let other = DcmNet::init(DcmNetSpec { res_blocks: 1, ..small() }, 0).unwrap();
        assert!(matches!(DcmNet::from_params(small(), other.into_params()), Err(Error::Config(_))));
        assert!(DcmNet::init(small(), 0).unwrap().residual(&pair(4, 4).0, &pair(5, 4).1, 0.2).is_err());
    }
}
