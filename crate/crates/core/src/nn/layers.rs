//! Parameter registration and tape application for conv/norm layers.
//!
//! Parameters are named `<layer>.w`, `<layer>.b` for convolutions and
//! `<layer>.g`, `<layer>.beta` for normalization affines.

use rand::Rng;

use super::params::{kaiming_uniform, BoundParams, LayerInit, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Registers a `k × k` convolution `ci → co`.
pub(crate) fn add_conv(params: &mut ParamSet, name: &str, ci: usize, co: usize, k: usize, init: LayerInit, rng: &mut impl Rng) {
    let shape = [co, ci, k, k];
    let w = match init {
        LayerInit::Kaiming => kaiming_uniform(&shape, ci * k * k, rng),
        LayerInit::Zero => Tensor::zeros(&shape),
    };
    params.insert(format!("{name}.w"), w);
    params.insert(format!("{name}.b"), Tensor::zeros(&[co]));
}

/// Registers a `k × k` transposed convolution `ci → co`.
pub(crate) fn add_conv_transpose(params: &mut ParamSet, name: &str, ci: usize, co: usize, k: usize, rng: &mut impl Rng) {
    params.insert(format!("{name}.w"), kaiming_uniform(&[ci, co, k, k], ci * k * k / 4, rng));
    params.insert(format!("{name}.b"), Tensor::zeros(&[co]));
}

pub(crate) fn add_norm(params: &mut ParamSet, name: &str, channels: usize) {
    params.insert(format!("{name}.g"), Tensor::from_vec(&[channels], vec![1.0; channels]));
    params.insert(format!("{name}.beta"), Tensor::zeros(&[channels]));
}

pub(crate) fn conv(tape: &mut Tape, p: &BoundParams, name: &str, x: Var, stride: usize, pad: usize) -> Var {
    tape.conv2d(x, p.var(&format!("{name}.w")), p.var(&format!("{name}.b")), stride, pad)
}

pub(crate) fn conv_transpose(tape: &mut Tape, p: &BoundParams, name: &str, x: Var, stride: usize, pad: usize) -> Var {
    tape.conv_transpose2d(x, p.var(&format!("{name}.w")), p.var(&format!("{name}.b")), stride, pad)
}

pub(crate) fn norm(tape: &mut Tape, p: &BoundParams, name: &str, x: Var, groups: usize) -> Var {
    tape.group_norm(x, p.var(&format!("{name}.g")), p.var(&format!("{name}.beta")), groups)
}
