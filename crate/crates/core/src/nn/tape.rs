//! Reverse-mode tape over `[C, H, W]` activations.
//!
//! Values are computed eagerly when an op is recorded. [`Tape::backward`]
//! takes explicit output gradients, which lets losses with hand-derived
//! gradients live outside the tape.

use std::rc::Rc;

use super::gemm::{col2im, gemm, im2col, ConvGeom};
use super::tensor::Tensor;
use crate::sampling::Taps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    LeakyRelu {
        x: Var,
        slope: f32,
    },
    Tanh {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Affine {
        x: Var,
        scale: f32,
    },
    JointNormalize {
        a: Var,
        b: Var,
        /// Flat indices into `a ++ b` of the minimum and maximum.
        arg_lo: usize,
        arg_hi: usize,
        range: f64,
        degenerate: bool,
    },
    Gather {
        x: Var,
        index: Rc<Vec<u32>>,
    },
    Resample {
        x: Var,
        taps: Rc<Taps>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Convolution with weight `[Co, Ci, k, k]` and bias `[Co]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (ci, h, wd) = self.value(x).chw();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws[1], ci, "conv2d: weight expects {} input channels, got {ci}", ws[1]);
        let geom = ConvGeom {
            channels: ci,
            height: h,
            width: wd,
            kernel: ws[2],
            stride,
            pad,
        };
        let (oh, ow) = geom.out_hw();
        let co = ws[0];
        let cols = im2col(self.value(x).data(), &geom);
        let mut out = vec![0.0f32; co * oh * ow];
        let bias = self.value(b).data();
        for (c, chunk) in out.chunks_mut(oh * ow).enumerate() {
            chunk.fill(bias[c]);
        }
        gemm(co, geom.col_rows(), oh * ow, self.value(w).data(), false, &cols, false, 1.0, &mut out);
        self.push(
            Tensor::from_vec(&[co, oh, ow], out),
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
        )
    }

    /// Transposed convolution with weight `[Ci, Co, k, k]`; output size is
    /// `(H − 1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (ci, h, wd) = self.value(x).chw();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws[0], ci, "conv_transpose2d: weight expects {} input channels, got {ci}", ws[0]);
        let (co, k) = (ws[1], ws[2]);
        let oh = (h - 1) * stride + k - 2 * pad;
        let ow = (wd - 1) * stride + k - 2 * pad;
        let geom = ConvGeom {
            channels: co,
            height: oh,
            width: ow,
            kernel: k,
            stride,
            pad,
        };
        debug_assert_eq!(geom.out_hw(), (h, wd));
        let mut cols = vec![0.0f32; geom.col_rows() * h * wd];
        gemm(geom.col_rows(), ci, h * wd, self.value(w).data(), true, self.value(x).data(), false, 0.0, &mut cols);
        let mut out = col2im(&cols, &geom);
        let bias = self.value(b).data();
        for (c, chunk) in out.chunks_mut(oh * ow).enumerate() {
            for v in chunk {
                *v += bias[c];
            }
        }
        self.push(
            Tensor::from_vec(&[co, oh, ow], out),
            Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                pad,
            },
        )
    }

    /// Group normalization with per-channel affine `gamma`, `beta`.
    /// `groups == channels` gives instance normalization.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert!(groups > 0 && c % groups == 0, "group_norm: {c} channels not divisible into {groups} groups");
        let per = (c / groups) * h * w;
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0f32; xv.len()];
        let mut rstd = vec![0.0f32; groups];
        let mut out = vec![0.0f32; xv.len()];
        for gi in 0..groups {
            let span = gi * per..(gi + 1) * per;
            let mean = xv[span.clone()].iter().map(|&v| v as f64).sum::<f64>() / per as f64;
            let var = xv[span.clone()]
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / per as f64;
            let r = 1.0 / (var + NORM_EPS).sqrt();
            rstd[gi] = r as f32;
            for i in span {
                let xh = ((xv[i] as f64 - mean) * r) as f32;
                xhat[i] = xh;
                let ch = i / (h * w);
                out[i] = g[ch] * xh + bt[ch];
            }
        }
        self.push(
            Tensor::from_vec(&[c, h, w], out),
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            },
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| if a > 0.0 { a } else { a * slope }).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::LeakyRelu { x, slope })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|a| a.tanh()).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Tanh { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let out = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Add { a, b })
    }

    /// Channel-wise concatenation of `[C_i, H, W]` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let (_, h, w) = self.value(parts[0]).chw();
        let mut channels = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (c, ph, pw) = self.value(p).chw();
            assert_eq!((ph, pw), (h, w), "concat: spatial mismatch");
            channels += c;
            out.extend_from_slice(self.value(p).data());
        }
        self.push(
            Tensor::from_vec(&[channels, h, w], out),
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    /// `scale · x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| a * scale + shift).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), Op::Affine { x, scale })
    }

    /// Min-max normalizes `a` and `b` by their joint extremes and stacks
    /// them as channels. Gradients flow through the extremes; a constant
    /// pair is only shifted.
    pub fn joint_normalize(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "joint_normalize: shape mismatch");
        let (_, h, w) = av.chw();
        let joined: Vec<f32> = av.data().iter().chain(bv.data()).copied().collect();
        let mut arg_lo = 0;
        let mut arg_hi = 0;
        for (i, &v) in joined.iter().enumerate() {
            if v < joined[arg_lo] {
                arg_lo = i;
            }
            if v > joined[arg_hi] {
                arg_hi = i;
            }
        }
        let lo = joined[arg_lo] as f64;
        let spread = joined[arg_hi] as f64 - lo;
        let degenerate = !(spread > 0.0);
        let range = if degenerate { 1.0 } else { spread };
        let out = joined.iter().map(|&v| ((v as f64 - lo) / range) as f32).collect();
        self.push(
            Tensor::from_vec(&[2 * av.chw().0, h, w], out),
            Op::JointNormalize {
                a,
                b,
                arg_lo,
                arg_hi,
                range,
                degenerate,
            },
        )
    }

    /// `out[i] = x[index[i]]` over flattened data, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Rc<Vec<u32>>, shape: &[usize]) -> Var {
        let src = self.value(x).data();
        let out = index.iter().map(|&i| src[i as usize]).collect();
        self.push(Tensor::from_vec(shape, out), Op::Gather { x, index })
    }

    /// Applies a planar sparse map to every channel; output plane is `oh × ow`.
    pub fn resample(&mut self, x: Var, taps: Rc<Taps>, oh: usize, ow: usize) -> Var {
        let (c, h, w) = self.value(x).chw();
        assert_eq!(taps.in_len(), h * w);
        assert_eq!(taps.out_len(), oh * ow);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for o in 0..oh * ow {
                let v: f64 = taps.taps(o).map(|(i, wt)| wt * plane[i] as f64).sum();
                out.push(v as f32);
            }
        }
        self.push(Tensor::from_vec(&[c, oh, ow], out), Op::Resample { x, taps })
    }

    /// Propagates the given output gradients back through the tape.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(g.shape(), self.value(v).shape(), "seed gradient shape mismatch");
            last = last.max(v.0);
            accumulate(&mut grads, v, g);
        }
        for idx in (0..=last).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (ci, h, wd) = self.value(x).chw();
                let wt = self.value(w);
                let ws = wt.shape();
                let geom = ConvGeom {
                    channels: ci,
                    height: h,
                    width: wd,
                    kernel: ws[2],
                    stride,
                    pad,
                };
                let (oh, ow) = geom.out_hw();
                let co = ws[0];
                let rows = geom.col_rows();
                let cols = im2col(self.value(x).data(), &geom);
                let mut dw = vec![0.0f32; co * rows];
                gemm(co, oh * ow, rows, g.data(), false, &cols, true, 0.0, &mut dw);
                accumulate(grads, w, Tensor::from_vec(ws, dw));
                accumulate(grads, b, channel_sums(g));
                let mut dcols = vec![0.0f32; rows * oh * ow];
                gemm(rows, co, oh * ow, wt.data(), true, g.data(), false, 0.0, &mut dcols);
                accumulate(grads, x, Tensor::from_vec(&[ci, h, wd], col2im(&dcols, &geom)));
            }
            &Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (ci, h, wd) = self.value(x).chw();
                let wt = self.value(w);
                let ws = wt.shape();
                let (co, oh, ow) = g.chw();
                let geom = ConvGeom {
                    channels: co,
                    height: oh,
                    width: ow,
                    kernel: ws[2],
                    stride,
                    pad,
                };
                let rows = geom.col_rows();
                let gcols = im2col(g.data(), &geom);
                let mut dx = vec![0.0f32; ci * h * wd];
                gemm(ci, rows, h * wd, wt.data(), false, &gcols, false, 0.0, &mut dx);
                accumulate(grads, x, Tensor::from_vec(&[ci, h, wd], dx));
                let mut dw = vec![0.0f32; ci * rows];
                gemm(ci, h * wd, rows, self.value(x).data(), false, &gcols, true, 0.0, &mut dw);
                accumulate(grads, w, Tensor::from_vec(ws, dw));
                accumulate(grads, b, channel_sums(g));
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let (c, h, w) = g.chw();
                let hw = h * w;
                let per = (c / groups) * hw;
                let gam = self.value(*gamma).data();
                let gd = g.data();
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                for ch in 0..c {
                    let (mut sg, mut sb) = (0.0f64, 0.0f64);
                    for i in ch * hw..(ch + 1) * hw {
                        sg += gd[i] as f64 * xhat[i] as f64;
                        sb += gd[i] as f64;
                    }
                    dgamma[ch] = sg as f32;
                    dbeta[ch] = sb as f32;
                }
                let mut dx = vec![0.0f32; gd.len()];
                for gi in 0..*groups {
                    let span = gi * per..(gi + 1) * per;
                    let (mut s1, mut s2) = (0.0f64, 0.0f64);
                    for i in span.clone() {
                        let dxh = gd[i] as f64 * gam[i / hw] as f64;
                        s1 += dxh;
                        s2 += dxh * xhat[i] as f64;
                    }
                    let m = per as f64;
                    let r = rstd[gi] as f64;
                    for i in span {
                        let dxh = gd[i] as f64 * gam[i / hw] as f64;
                        dx[i] = (r / m * (m * dxh - s1 - xhat[i] as f64 * s2)) as f32;
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx));
                accumulate(grads, *gamma, Tensor::from_vec(&[c], dgamma));
                accumulate(grads, *beta, Tensor::from_vec(&[c], dbeta));
            }
            &Op::LeakyRelu { x, slope } => {
                let xv = self.value(x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &a)| if a > 0.0 { gv } else { gv * slope })
                    .collect();
                accumulate(grads, x, Tensor::from_vec(g.shape(), d));
            }
            &Op::Tanh { x } => {
                let y = node.value.data();
                let d = g.data().iter().zip(y).map(|(&gv, &t)| gv * (1.0 - t * t)).collect();
                accumulate(grads, x, Tensor::from_vec(g.shape(), d));
            }
            &Op::Add { a, b } => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.clone());
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape().to_vec();
                    let n: usize = shape.iter().product();
                    accumulate(grads, p, Tensor::from_vec(&shape, g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            &Op::Affine { x, scale } => {
                let d = g.data().iter().map(|&v| v * scale).collect();
                accumulate(grads, x, Tensor::from_vec(g.shape(), d));
            }
            &Op::JointNormalize {
                a,
                b,
                arg_lo,
                arg_hi,
                range,
                degenerate,
            } => {
                let y = node.value.data();
                let mut d: Vec<f64> = g.data().iter().map(|&v| v as f64 / range).collect();
                let mut g_lo = 0.0;
                let mut g_hi = 0.0;
                for (&gi, &yi) in g.data().iter().zip(y) {
                    g_lo += gi as f64 * (yi as f64 - 1.0) / range;
                    g_hi -= gi as f64 * yi as f64 / range;
                }
                if degenerate {
                    g_lo = -g.data().iter().map(|&v| v as f64).sum::<f64>();
                    g_hi = 0.0;
                }
                d[arg_lo] += g_lo;
                d[arg_hi] += g_hi;
                let half = d.len() / 2;
                let shape = self.value(a).shape().to_vec();
                let to_tensor = |s: &[f64]| Tensor::from_vec(&shape, s.iter().map(|&v| v as f32).collect());
                accumulate(grads, a, to_tensor(&d[..half]));
                accumulate(grads, b, to_tensor(&d[half..]));
            }
            Op::Gather { x, index } => {
                let shape = self.value(*x).shape().to_vec();
                let mut d = vec![0.0f32; self.value(*x).len()];
                for (o, &i) in index.iter().enumerate() {
                    d[i as usize] += g.data()[o];
                }
                accumulate(grads, *x, Tensor::from_vec(&shape, d));
            }
            Op::Resample { x, taps } => {
                let (c, h, w) = self.value(*x).chw();
                let out_len = taps.out_len();
                let mut d = Vec::with_capacity(c * h * w);
                for ch in 0..c {
                    d.extend(taps.apply_transpose(&g.data()[ch * out_len..(ch + 1) * out_len]));
                }
                accumulate(grads, *x, Tensor::from_vec(&[c, h, w], d));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn channel_sums(g: &Tensor) -> Tensor {
    let (c, h, w) = g.chw();
    let sums = g
        .data()
        .chunks(h * w)
        .map(|ch| ch.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();
    Tensor::from_vec(&[c], sums)
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}
