use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use depthfuse::dcm::{load_scale_group, train_dcm, DcmLossRecord, DcmNetSpec, DcmTrainConfig};
use depthfuse::flow::{FlowKind, FlowProviderConfig};
use depthfuse::lfm::{load_lfm_dataset, train_lfm, FusionNetSpec, LfmLossRecord, LfmTrainConfig, RankDomain};

use super::{create_dir, required_path, sibling, warn_unused, write_csv};
use crate::config::Settings;
use crate::exit::require;
use crate::manifest::Manifest;
use crate::weights::{save_dcm, save_lfm, spec_path};

#[derive(Args, Debug)]
pub struct TrainLfmArgs {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of `<pair>/lo.pfm`, `hi.pfm` and optional `label.pfm`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weight file to write; `<out>.spec`, `<out>.loss.csv` and
    /// `<out>.manifest.txt` are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// Upper bound on the number of dataset pairs used.
    #[arg(long)]
    pub pair_count: Option<usize>,
    /// Ordinal point pairs per image and step.
    #[arg(long)]
    pub pair_samples: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f32>,
    #[arg(long)]
    pub ilnr_weight: Option<f64>,
    #[arg(long)]
    pub rank_weight: Option<f64>,
    /// Depth ratio treated as equal when labelling point pairs.
    #[arg(long)]
    pub ratio_threshold: Option<f64>,
    /// value or gradient.
    #[arg(long)]
    pub rank_domain: Option<String>,
    /// Label-gradient threshold marking edges for pair sampling.
    #[arg(long)]
    pub edge_threshold: Option<f32>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth_levels: Option<usize>,
    /// Group-normalization group count.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run_lfm(a: TrainLfmArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let data = required_path(&s, a.data, "data")?;
    let out = required_path(&s, a.out, "out")?;
    let d = LfmTrainConfig::default();
    let rank_domain_text = s.get_or(a.rank_domain, "rank_domain", "value".to_owned())?;
    let cfg = LfmTrainConfig {
        learning_rate: s.get_or(a.lr, "lr", d.learning_rate)?,
        iterations: s.get_or(a.iterations, "iterations", d.iterations)?,
        pair_count: s.get_or(a.pair_count, "pair_count", d.pair_count)?,
        pair_sample_count: s.get_or(a.pair_samples, "pair_samples", d.pair_sample_count)?,
        seed: s.get_or(a.seed, "seed", d.seed)?,
        weight_decay: s.get_or(a.weight_decay, "weight_decay", d.weight_decay)?,
        ilnr_weight: s.get_or(a.ilnr_weight, "ilnr_weight", d.ilnr_weight)?,
        rank_weight: s.get_or(a.rank_weight, "rank_weight", d.rank_weight)?,
        ratio_threshold: s.get_or(a.ratio_threshold, "ratio_threshold", d.ratio_threshold)?,
        rank_domain: rank_domain_text.parse::<RankDomain>()?,
        edge_threshold: s.get_or(a.edge_threshold, "edge_threshold", d.edge_threshold)?,
    };
    let ds = FusionNetSpec::default();
    let spec = FusionNetSpec {
        base_channels: s.get_or(a.base_channels, "base_channels", ds.base_channels)?,
        depth_levels: s.get_or(a.depth_levels, "depth_levels", ds.depth_levels)?,
        groups: s.get_or(a.groups, "groups", ds.groups)?,
        ..ds
    };
    warn_unused(&s);
    cfg.validate()?;
    spec.validate()?;
    require(&data)?;
    let samples = load_lfm_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    if samples.is_empty() {
        bail!("{} holds no training pairs", data.display());
    }

    let outcome = train_lfm(&cfg, &samples, spec)?;
    prepare_parent(&out)?;
    save_lfm(&out, &outcome.net)?;
    let csv = sibling(&out, ".loss.csv");
    write_csv(&csv, LfmLossRecord::CSV_HEADER, outcome.log.iter().map(LfmLossRecord::to_csv))?;

    let mut m = Manifest::new("train-lfm");
    m.set("data", data.display());
    m.set("out", out.display());
    m.set("iterations", cfg.iterations);
    m.set("lr", cfg.learning_rate);
    m.set("pair_count", cfg.pair_count);
    m.set("pair_samples", cfg.pair_sample_count);
    m.set("weight_decay", cfg.weight_decay);
    m.set("ilnr_weight", cfg.ilnr_weight);
    m.set("rank_weight", cfg.rank_weight);
    m.set("ratio_threshold", cfg.ratio_threshold);
    m.set("rank_domain", &rank_domain_text);
    m.set("edge_threshold", cfg.edge_threshold);
    m.set("base_channels", spec.base_channels);
    m.set("depth_levels", spec.depth_levels);
    m.set("groups", spec.groups);
    m.set("seed", cfg.seed);
    m.set("samples", samples.len());
    record_outputs(&mut m, &out, &csv);
    m.write(&sibling(&out, ".manifest.txt"))?;
    println!(
        "train-lfm: {} iterations, loss {:.6} -> {:.6}",
        cfg.iterations, outcome.initial.total, outcome.last.total
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainDcmArgs {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of groups, each holding `d1.pfm..d5.pfm` and optional
    /// `f2.flo..f5.flo`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weight file to write; `<out>.spec`, `<out>.loss.csv` and
    /// `<out>.manifest.txt` are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Square training crop side.
    #[arg(long)]
    pub crop: Option<usize>,
    /// Occlusion-weight sharpness.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bound on the residual, in depth units.
    #[arg(long)]
    pub residual_scale: Option<f32>,
    #[arg(long)]
    pub consistency_weight: Option<f64>,
    #[arg(long)]
    pub depth_weight: Option<f64>,
    /// Trimmed fraction of the depth loss.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Flow for groups without `.flo` files: identity, block-match or
    /// file:<template> with `{s}` for the scale index.
    #[arg(long)]
    pub flow: Option<String>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Down- and up-sampling stages.
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub res_blocks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run_dcm(a: TrainDcmArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let data = required_path(&s, a.data, "data")?;
    let out = required_path(&s, a.out, "out")?;
    let d = DcmTrainConfig::default();
    let cfg = DcmTrainConfig {
        learning_rate: s.get_or(a.lr, "lr", d.learning_rate)?,
        iterations: s.get_or(a.iterations, "iterations", d.iterations)?,
        batch: s.get_or(a.batch, "batch", d.batch)?,
        crop: s.get_or(a.crop, "crop", d.crop)?,
        alpha: s.get_or(a.alpha, "alpha", d.alpha)?,
        residual_scale: s.get_or(a.residual_scale, "residual_scale", d.residual_scale)?,
        seed: s.get_or(a.seed, "seed", d.seed)?,
        consistency_weight: s.get_or(a.consistency_weight, "consistency_weight", d.consistency_weight)?,
        depth_weight: s.get_or(a.depth_weight, "depth_weight", d.depth_weight)?,
        trim: s.get_or(a.trim, "trim", d.trim)?,
    };
    let flow_text = s.get_or(a.flow, "flow", "block-match".to_owned())?;
    let flow = FlowProviderConfig {
        kind: flow_text.parse::<FlowKind>()?,
        ..FlowProviderConfig::default()
    };
    let ds = DcmNetSpec::default();
    let stages = s.get_or(a.stages, "stages", ds.down_stages)?;
    let spec = DcmNetSpec {
        base_channels: s.get_or(a.base_channels, "base_channels", ds.base_channels)?,
        down_stages: stages,
        up_stages: stages,
        res_blocks: s.get_or(a.res_blocks, "res_blocks", ds.res_blocks)?,
        ..ds
    };
    warn_unused(&s);
    cfg.validate()?;
    flow.validate()?;
    spec.validate()?;
    require(&data)?;
    let groups = load_groups(&data, &flow)?;

    let outcome = train_dcm(&cfg, &groups, spec)?;
    prepare_parent(&out)?;
    save_dcm(&out, &outcome.net)?;
    let csv = sibling(&out, ".loss.csv");
    write_csv(&csv, DcmLossRecord::CSV_HEADER, outcome.log.iter().map(DcmLossRecord::to_csv))?;

    let mut m = Manifest::new("train-dcm");
    m.set("data", data.display());
    m.set("out", out.display());
    m.set("iterations", cfg.iterations);
    m.set("lr", cfg.learning_rate);
    m.set("batch", cfg.batch);
    m.set("crop", cfg.crop);
    m.set("alpha", cfg.alpha);
    m.set("residual_scale", cfg.residual_scale);
    m.set("consistency_weight", cfg.consistency_weight);
    m.set("depth_weight", cfg.depth_weight);
    m.set("trim", cfg.trim);
    m.set("flow", &flow_text);
    m.set("base_channels", spec.base_channels);
    m.set("stages", stages);
    m.set("res_blocks", spec.res_blocks);
    m.set("seed", cfg.seed);
    m.set("groups", groups.len());
    m.set("initial_consistency", outcome.initial_consistency);
    m.set("final_consistency", outcome.final_consistency);
    record_outputs(&mut m, &out, &csv);
    m.write(&sibling(&out, ".manifest.txt"))?;
    println!(
        "train-dcm: {} iterations, consistency {:.6} -> {:.6}",
        cfg.iterations, outcome.initial_consistency, outcome.final_consistency
    );
    Ok(())
}

fn load_groups(dir: &Path, flow: &FlowProviderConfig) -> Result<Vec<depthfuse::dcm::ScaleGroup>> {
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        bail!("{} holds no scale groups", dir.display());
    }
    subdirs
        .iter()
        .map(|d| {
            let mut g = load_scale_group(d).with_context(|| format!("loading {}", d.display()))?;
            g.resolve_flows(flow, Some(d)).with_context(|| format!("flows for {}", d.display()))?;
            Ok(g)
        })
        .collect()
}

fn prepare_parent(out: &Path) -> Result<()> {
    match out.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => create_dir(p),
        None => Ok(()),
    }
}

fn record_outputs(m: &mut Manifest, out: &Path, csv: &Path) {
    m.output("weights", out);
    m.output("spec", &spec_path(out));
    m.output("loss", csv);
}
