//! Self-supervised training on scale groups: the sequential update is
//! recorded on a tape, the consistency loss pulls every updated `D_s` toward
//! its warped predecessor and the depth loss keeps each one in the domain of
//! `D_1`.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{ssi_trim_loss_and_grad, DEFAULT_TRIM};
use super::net::{record_residual, DcmNet, DcmNetSpec, TapeModel, DEFAULT_RESIDUAL_SCALE};
use super::{consistency_loss, group_weights, sequential_update, ScaleGroup, ScaledDcm, DEFAULT_ALPHA, GROUP_SIZE};
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamSet, Tape, Tensor};
use crate::sampling::warp_taps;

#[derive(Debug, Clone, PartialEq)]
pub struct DcmTrainConfig {
    pub learning_rate: f32,
    pub iterations: usize,
    pub batch: usize,
    /// Square crop side; groups smaller than this are used whole.
    pub crop: usize,
    pub alpha: f64,
    pub residual_scale: f32,
    pub seed: u64,
    pub consistency_weight: f64,
    pub depth_weight: f64,
    pub trim: f64,
}

impl Default for DcmTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            iterations: 50_000,
            batch: 4,
            crop: 192,
            alpha: DEFAULT_ALPHA,
            residual_scale: DEFAULT_RESIDUAL_SCALE,
            seed: 0,
            consistency_weight: 1.0,
            depth_weight: 1.0,
            trim: DEFAULT_TRIM,
        }
    }
}

impl DcmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate as f64),
            ("batch", self.batch as f64),
            ("crop", self.crop as f64),
            ("alpha", self.alpha),
            ("residual_scale", self.residual_scale as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("consistency_weight", self.consistency_weight), ("depth_weight", self.depth_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::Config(format!("trim {} must lie in [0, 0.5)", self.trim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcmLossRecord {
    pub iteration: usize,
    pub consistency: f64,
    pub depth: f64,
    pub total: f64,
}

impl DcmLossRecord {
    pub const CSV_HEADER: &'static str = "iteration,consistency,depth,total";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.iteration, self.consistency, self.depth, self.total)
    }
}

#[derive(Debug, Clone)]
pub struct DcmTrainOutcome {
    pub net: DcmNet,
    pub log: Vec<DcmLossRecord>,
    /// Mean consistency loss over the dataset after the sequential update,
    /// before and after training.
    pub initial_consistency: f64,
    pub final_consistency: f64,
}

/// Losses of one group and the parameter gradients of
/// `grad_scale · (w_c·L_C + w_d·L_depth)`.
pub(crate) struct GroupPass {
    pub consistency: f64,
    pub depth: f64,
    pub grads: Vec<Tensor>,
}

pub(crate) fn group_pass(
    model: &impl TapeModel,
    params: &ParamSet,
    group: &ScaleGroup,
    cfg: &DcmTrainConfig,
    grad_scale: f64,
) -> Result<GroupPass> {
    let flows = group.flows_complete()?;
    let weights = group_weights(group, cfg.alpha)?;
    let (w, h) = group.dims();
    let n = w * h;
    let plane = |i: usize| Tensor::from_vec(&[1, h, w], group.depths[i].data().to_vec());
    let anchor = group.depths[0].data();
    let all: Vec<usize> = (0..n).collect();

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut prev = tape.leaf(plane(0));
    let mut seeds = Vec::new();
    let (mut lc, mut ld) = (0.0, 0.0);
    for s in 2..=GROUP_SIZE {
        let x = tape.leaf(plane(s - 1));
        let r = record_residual(model, &mut tape, &bound, x, prev, cfg.residual_scale);
        let updated = tape.add(x, r);
        let flow = flows[s - 2];
        let warped = if flow.is_zero() {
            prev
        } else {
            tape.resample(prev, Rc::new(warp_taps(flow)), h, w)
        };
        let m = &weights[s - 2];
        let (u, v) = (tape.value(updated).data(), tape.value(warped).data());
        let mut g = vec![0.0f32; n];
        let mut term = 0.0;
        for i in 0..n {
            let d = u[i] as f64 - v[i] as f64;
            term += m[i] * d.abs();
            let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            g[i] = (grad_scale * cfg.consistency_weight * m[i] * sign / n as f64) as f32;
        }
        lc += term / n as f64;
        let neg: Vec<f32> = g.iter().map(|v| -v).collect();
        seeds.push((updated, Tensor::from_vec(&[1, h, w], g)));
        seeds.push((warped, Tensor::from_vec(&[1, h, w], neg)));
        if cfg.depth_weight > 0.0 {
            match ssi_trim_loss_and_grad(u, anchor, &all, cfg.trim) {
                Ok((loss, grad)) => {
                    ld += loss;
                    let k = (grad_scale * cfg.depth_weight) as f32;
                    let grad = grad.into_iter().map(|v| v * k).collect();
                    seeds.push((updated, Tensor::from_vec(&[1, h, w], grad)));
                }
                Err(Error::Loss(_)) => {}
                Err(e) => return Err(e),
            }
        }
        prev = updated;
    }
    let grads = tape.backward(seeds);
    Ok(GroupPass {
        consistency: lc,
        depth: ld,
        grads: bound.gradients(&grads, params),
    })
}

fn dataset_consistency(net: &DcmNet, groups: &[ScaleGroup], cfg: &DcmTrainConfig) -> Result<f64> {
    let model = ScaledDcm {
        net,
        residual_scale: cfg.residual_scale,
    };
    let mut sum = 0.0;
    for g in groups {
        sum += consistency_loss(&sequential_update(g, &model)?, cfg.alpha)?;
    }
    Ok(sum / groups.len() as f64)
}

/// Trains a [`DcmNet`] on groups whose flows are all present.
///
/// Each iteration draws `batch` groups with replacement, takes one random
/// crop per group shared by all its members and flows, and takes one Adam
/// step on the batch-mean loss.
pub fn train_dcm(cfg: &DcmTrainConfig, groups: &[ScaleGroup], spec: DcmNetSpec) -> Result<DcmTrainOutcome> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::Training {
            iteration: 0,
            message: "dataset is empty".into(),
        });
    }
    for g in groups {
        g.validate()?;
        g.flows_complete()?;
    }
    let mut net = DcmNet::init(spec, cfg.seed)?;
    let initial_consistency = dataset_consistency(&net, groups, cfg)?;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xdc3_5eed);
    let mut log = Vec::with_capacity(cfg.iterations);
    let scale = 1.0 / cfg.batch as f64;
    for it in 1..=cfg.iterations {
        let mut sum: Option<Vec<Tensor>> = None;
        let (mut lc, mut ld) = (0.0, 0.0);
        for _ in 0..cfg.batch {
            let g = &groups[rng.random_range(0..groups.len())];
            let (w, h) = g.dims();
            let (cw, ch) = (cfg.crop.min(w), cfg.crop.min(h));
            let x0 = rng.random_range(0..=w - cw);
            let y0 = rng.random_range(0..=h - ch);
            let cropped = g.crop(x0, y0, cw, ch)?;
            let pass = group_pass(&net, net.params(), &cropped, cfg, scale)?;
            lc += pass.consistency * scale;
            ld += pass.depth * scale;
            match &mut sum {
                None => sum = Some(pass.grads),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&pass.grads) {
                        a.add_assign(b);
                    }
                }
            }
        }
        let grads = sum.expect("batch is non-empty");
        let total = cfg.consistency_weight * lc + cfg.depth_weight * ld;
        if !total.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Training {
                iteration: it,
                message: format!("non-finite loss {total}"),
            });
        }
        log.push(DcmLossRecord {
            iteration: it,
            consistency: lc,
            depth: ld,
            total,
        });
        opt.step(net.params_mut(), &grads);
    }
    let final_consistency = if cfg.iterations == 0 {
        initial_consistency
    } else {
        dataset_consistency(&net, groups, cfg)?
    };
    Ok(DcmTrainOutcome {
        net,
        log,
        initial_consistency,
        final_consistency,
    })
}
