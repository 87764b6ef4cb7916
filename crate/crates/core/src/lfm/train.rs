//! Training of the fusion network on pseudo-labelled resolution pairs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{gradient_magnitude, gradient_magnitude_adjoint, ranking_loss_and_grad, IlnrTarget};
use super::make_pseudo_pair;
use super::net::{FusionNet, FusionNetSpec};
use crate::edges::binarize;
use crate::error::{check_shape, Error, Result};
use crate::guided::GuidedFilterParams;
use crate::io::{read_pfm, write_pfm};
use crate::maps::{DepthMap, EdgeMap, Raster};
use crate::nn::{Adam, Tape, Tensor};
use crate::pairs::{sample_pairs, PairSampling, PointPair, DEFAULT_RATIO_THRESHOLD};

/// Where ranking pairs are labelled and scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankDomain {
    /// Depth values.
    #[default]
    Value,
    /// Sobel gradient magnitude of the depth.
    Gradient,
}

impl std::str::FromStr for RankDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(Self::Value),
            "gradient" => Ok(Self::Gradient),
            other => Err(Error::arg(format!("unknown ranking domain {other:?} (value|gradient)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfmTrainConfig {
    pub learning_rate: f32,
    pub iterations: usize,
    /// Upper bound on the number of dataset pairs used.
    pub pair_count: usize,
    /// Ordinal point pairs sampled per training image.
    pub pair_sample_count: usize,
    pub seed: u64,
    pub weight_decay: f32,
    pub ilnr_weight: f64,
    pub rank_weight: f64,
    pub ratio_threshold: f64,
    pub rank_domain: RankDomain,
    /// Threshold on the normalized label gradient that marks edges for pair
    /// sampling.
    pub edge_threshold: f32,
}

impl Default for LfmTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            iterations: 9000,
            pair_count: 3000,
            pair_sample_count: 1000,
            seed: 0,
            weight_decay: 1e-2,
            ilnr_weight: 1.0,
            rank_weight: 1.0,
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            rank_domain: RankDomain::Value,
            edge_threshold: 0.3,
        }
    }
}

impl LfmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.pair_count < 1 || self.pair_sample_count < 1 {
            return Err(Error::Config("pair_count and pair_sample_count must be >= 1".into()));
        }
        if self.weight_decay < 0.0 || self.ilnr_weight < 0.0 || self.rank_weight < 0.0 {
            return Err(Error::Config("weight decay and loss weights must be >= 0".into()));
        }
        if !(self.ratio_threshold > 1.0) {
            return Err(Error::Config(format!("ratio threshold {} must be > 1", self.ratio_threshold)));
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold < 1.0) {
            return Err(Error::Config(format!("edge threshold {} must lie in (0, 1)", self.edge_threshold)));
        }
        Ok(())
    }
}

/// One pseudo-labelled pair: coarse input, detailed input, fused label.
#[derive(Debug, Clone, PartialEq)]
pub struct LfmSample {
    pub lo: DepthMap,
    pub hi: DepthMap,
    pub label: DepthMap,
}

/// Reads `<pair>/lo.pfm`, `<pair>/hi.pfm` and, when present,
/// `<pair>/label.pfm` from every subdirectory in name order. Missing labels
/// are generated with the width-derived guided filter.
pub fn load_lfm_dataset(dir: impl AsRef<Path>) -> Result<Vec<LfmSample>> {
    let mut dirs: Vec<_> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::with_capacity(dirs.len());
    for d in dirs {
        let lo: DepthMap = read_pfm(d.join("lo.pfm"))?;
        let hi: DepthMap = read_pfm(d.join("hi.pfm"))?;
        check_shape(lo.dims(), hi.dims())?;
        let label_path = d.join("label.pfm");
        let label = if label_path.exists() {
            let l: DepthMap = read_pfm(label_path)?;
            check_shape(lo.dims(), l.dims())?;
            l
        } else {
            make_pseudo_pair(&lo, &hi, &GuidedFilterParams::for_width(lo.width()))?.1
        };
        out.push(LfmSample { lo, hi, label });
    }
    Ok(out)
}

pub fn write_lfm_dataset(dir: impl AsRef<Path>, samples: &[LfmSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        let d = dir.as_ref().join(format!("pair{i:04}"));
        fs::create_dir_all(&d)?;
        write_pfm(d.join("lo.pfm"), &s.lo)?;
        write_pfm(d.join("hi.pfm"), &s.hi)?;
        write_pfm(d.join("label.pfm"), &s.label)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfmLossRecord {
    pub iteration: usize,
    pub ilnr: f64,
    pub rank: f64,
    pub total: f64,
}

impl LfmLossRecord {
    pub const CSV_HEADER: &'static str = "iteration,ilnr,rank,total";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.iteration, self.ilnr, self.rank, self.total)
    }
}

#[derive(Debug, Clone)]
pub struct LfmTrainOutcome {
    pub net: FusionNet,
    /// One record per optimizer step.
    pub log: Vec<LfmLossRecord>,
    /// Dataset-mean losses before the first and after the last step.
    pub initial: LfmLossRecord,
    pub last: LfmLossRecord,
}

struct Prepared {
    xa: Tensor,
    xb: Tensor,
    target: IlnrTarget,
    pairs: Vec<PointPair>,
    width: usize,
    height: usize,
}

fn prepare(sample: &LfmSample, cfg: &LfmTrainConfig, seed: u64) -> Result<Prepared> {
    check_shape(sample.lo.dims(), sample.hi.dims())?;
    check_shape(sample.lo.dims(), sample.label.dims())?;
    let (w, h) = sample.label.dims();
    let (mean, std) = FusionNet::standardization(&sample.lo);
    let target = IlnrTarget::new(&sample.label)?;
    let score_map = match cfg.rank_domain {
        RankDomain::Value => sample.label.clone(),
        RankDomain::Gradient => DepthMap::from_computed(w, h, gradient_magnitude(sample.label.data(), w, h).0),
    };
    let (mag, _, _) = gradient_magnitude(sample.label.data(), w, h);
    let max = mag.iter().copied().fold(0.0f32, f32::max);
    let edges = EdgeMap::from_clamped(w, h, mag.iter().map(|&m| if max > 0.0 { m / max } else { 0.0 }).collect());
    let mask = binarize(&edges, cfg.edge_threshold)?;
    let pairs = sample_pairs(
        &score_map,
        &mask,
        &PairSampling {
            count: cfg.pair_sample_count,
            ratio_threshold: cfg.ratio_threshold,
            seed,
            ..PairSampling::default()
        },
    )?;
    Ok(Prepared {
        xa: FusionNet::standardize(&sample.lo, mean, std),
        xb: FusionNet::standardize(&sample.hi, mean, std),
        target,
        pairs,
        width: w,
        height: h,
    })
}

/// Loss terms of one sample and, when `backprop`, the parameter gradients.
fn step_sample(net: &FusionNet, p: &Prepared, cfg: &LfmTrainConfig, backprop: bool) -> (f64, f64, Option<Vec<Tensor>>) {
    let mut tape = Tape::new();
    let bound = net.params().bind(&mut tape);
    let xa = tape.leaf(p.xa.clone());
    let xb = tape.leaf(p.xb.clone());
    let r = net.forward(&mut tape, &bound, xa, xb);
    let y = tape.add(xa, r);
    let pred = tape.value(y).data();
    let (ilnr, g_ilnr) = p.target.loss_and_grad(pred, |_| true);
    let (rank, g_rank) = match cfg.rank_domain {
        RankDomain::Value => ranking_loss_and_grad(pred, p.width, &p.pairs),
        RankDomain::Gradient => {
            let (mag, gx, gy) = gradient_magnitude(pred, p.width, p.height);
            let (l, gm) = ranking_loss_and_grad(&mag, p.width, &p.pairs);
            (l, gradient_magnitude_adjoint(&gm, &gx, &gy, p.width, p.height))
        }
    };
    if !backprop {
        return (ilnr, rank, None);
    }
    let seed: Vec<f32> = g_ilnr
        .iter()
        .zip(&g_rank)
        .map(|(a, b)| (cfg.ilnr_weight as f32) * a + (cfg.rank_weight as f32) * b)
        .collect();
    let grads = tape.backward(vec![(y, Tensor::from_vec(&[1, p.height, p.width], seed))]);
    (ilnr, rank, Some(bound.gradients(&grads, net.params())))
}

fn record(iteration: usize, ilnr: f64, rank: f64, cfg: &LfmTrainConfig) -> LfmLossRecord {
    LfmLossRecord {
        iteration,
        ilnr,
        rank,
        total: cfg.ilnr_weight * ilnr + cfg.rank_weight * rank,
    }
}

fn dataset_mean(net: &FusionNet, data: &[Prepared], cfg: &LfmTrainConfig, iteration: usize) -> LfmLossRecord {
    let (mut a, mut b) = (0.0, 0.0);
    for p in data {
        let (i, r, _) = step_sample(net, p, cfg, false);
        a += i;
        b += r;
    }
    let n = data.len() as f64;
    record(iteration, a / n, b / n, cfg)
}

/// Optimizes `ilnr_weight·ILNR + rank_weight·ranking` with AdamW, one sample
/// per step drawn by a seeded generator. Samples whose label has no trimmed
/// spread are skipped.
pub fn train_lfm(cfg: &LfmTrainConfig, dataset: &[LfmSample], spec: FusionNetSpec) -> Result<LfmTrainOutcome> {
    cfg.validate()?;
    let mut net = FusionNet::init(spec, cfg.seed)?;
    if dataset.is_empty() {
        return Err(Error::Training {
            iteration: 0,
            message: "dataset is empty".into(),
        });
    }
    let mut prepared = Vec::new();
    for (i, s) in dataset.iter().take(cfg.pair_count).enumerate() {
        match prepare(s, cfg, cfg.seed.wrapping_add(i as u64)) {
            Ok(p) => prepared.push(p),
            Err(Error::Loss(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if prepared.is_empty() {
        return Err(Error::Training {
            iteration: 0,
            message: "no sample has a usable label".into(),
        });
    }
    let initial = dataset_mean(&net, &prepared, cfg, 0);
    let mut opt = Adam::adamw(cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_1f0);
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let p = &prepared[rng.random_range(0..prepared.len())];
        let (ilnr, rank, grads) = step_sample(&net, p, cfg, true);
        let rec = record(it, ilnr, rank, cfg);
        let grads = grads.expect("gradients requested");
        if !rec.total.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Training {
                iteration: it,
                message: format!("non-finite loss {}", rec.total),
            });
        }
        log.push(rec);
        opt.step(net.params_mut(), &grads);
    }
    let last = if cfg.iterations == 0 {
        initial
    } else {
        dataset_mean(&net, &prepared, cfg, cfg.iterations)
    };
    Ok(LfmTrainOutcome { net, log, initial, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> FusionNetSpec {
        FusionNetSpec { base_channels: 8, depth_levels: 2, groups: 2, slope: 0.2 }
    }

    fn tiny_data() -> Vec<LfmSample> {
        crate::synth::toy_lfm_dataset(2, 32, 3).unwrap()
    }

    fn quick() -> LfmTrainConfig {
        LfmTrainConfig { learning_rate: 1e-3, iterations: 3, pair_sample_count: 50, ..LfmTrainConfig::default() }
    }

    #[test]
    fn zero_iterations_keep_init() {
        let out = train_lfm(&LfmTrainConfig { iterations: 0, ..quick() }, &tiny_data(), tiny_spec()).unwrap();
        assert_eq!(out.net.params(), FusionNet::init(tiny_spec(), 0).unwrap().params());
        assert!(out.log.is_empty());
        assert_eq!(out.initial, out.last);
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let a = train_lfm(&quick(), &tiny_data(), tiny_spec()).unwrap();
        let b = train_lfm(&quick(), &tiny_data(), tiny_spec()).unwrap();
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_ne!(a.net.params(), FusionNet::init(tiny_spec(), 0).unwrap().params());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(train_lfm(&quick(), &[], tiny_spec()), Err(Error::Training { .. })));
        let flat = LfmSample {
            lo: DepthMap::constant(8, 8, 1.0),
            hi: DepthMap::constant(8, 8, 1.0),
            label: DepthMap::constant(8, 8, 1.0),
        };
        assert!(matches!(train_lfm(&quick(), &[flat], tiny_spec()), Err(Error::Training { .. })));
        assert!(train_lfm(&LfmTrainConfig { learning_rate: 0.0, ..quick() }, &tiny_data(), tiny_spec()).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data();
        write_lfm_dataset(dir.path(), &data).unwrap();
        assert_eq!(load_lfm_dataset(dir.path()).unwrap(), data);
        std::fs::remove_file(dir.path().join("pair0000/label.pfm")).unwrap();
        let regenerated = load_lfm_dataset(dir.path()).unwrap();
        assert_eq!(regenerated[0].label, data[0].label);
    }

    #[test]
    fn record_csv() {
        let r = LfmLossRecord { iteration: 4, ilnr: 0.5, rank: 0.25, total: 0.75 };
        assert_eq!(r.to_csv(), "4,0.5,0.25,0.75");
        assert_eq!(LfmLossRecord::CSV_HEADER, "iteration,ilnr,rank,total");
    }
}
