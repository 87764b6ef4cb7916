use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use depthfuse::colormap::colorize;
use depthfuse::dcm::{DcmNet, DcmNetSpec};
use depthfuse::guided::GuidedFilterParams;
use depthfuse::io::load_image;
use depthfuse::lfm::{FusionNet, FusionNetSpec};
use depthfuse::pipeline::{edge_stage, fuse_depths, FusionConfig, FusionMode, FusionModels};
use depthfuse::{DepthMap, Image, Raster};

use super::{create_dir, record_input, required_path, warn_unused, write_map, write_png, EdgeOpts};
use crate::config::Settings;
use crate::exit::Usage;
use crate::manifest::Manifest;
use crate::provider::{flip_disparity, read_depth, run_depth_command};
use crate::weights::{load_dcm, load_lfm};

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// key=value settings (a previous run's manifest replays it); flags take
    /// precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input RGB image (PNG).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Depth of the image, D (PFM).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Depth of the edge map, D_e (PFM).
    #[arg(long)]
    pub depth_edge: Option<PathBuf>,
    /// Depth of the edge-highlighted image, D_eh (PFM).
    #[arg(long)]
    pub depth_highlighted: Option<PathBuf>,
    /// Shell command producing any depth not given as a file; `{input}` is
    /// a PNG and `{output}` the PFM to write.
    #[arg(long)]
    pub depth_cmd: Option<String>,
    /// Inputs hold inverse depth; use `max - d`.
    #[arg(long)]
    pub disparity: bool,
    #[command(flatten)]
    pub edges: EdgeOpts,
    /// Fusion mode: d, e, f, g, h, i, j or n.
    #[arg(long)]
    pub mode: Option<FusionMode>,
    /// Guided-filter radius; defaults to width / 12.
    #[arg(long)]
    pub gf_radius: Option<usize>,
    /// Guided-filter regularizer.
    #[arg(long)]
    pub gf_eps: Option<f64>,
    /// Swap guide and input of the first fusion stage.
    #[arg(long)]
    pub swap_stage1: bool,
    /// Bound on the refinement residual, in depth units.
    #[arg(long)]
    pub residual_scale: Option<f32>,
    /// Fusion-network weights (modes j and n).
    #[arg(long)]
    pub lfm_weights: Option<PathBuf>,
    /// Consistency-network weights (mode n).
    #[arg(long)]
    pub dcm_weights: Option<PathBuf>,
    /// Seed for networks initialized in place of missing weights.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct DepthInput<'a> {
    key: &'static str,
    flag: Option<PathBuf>,
    source: &'a Image,
}

pub fn run(a: PipelineArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let mut m = Manifest::new("pipeline");
    let image_path = required_path(&s, a.image, "image")?;
    let out = required_path(&s, a.out, "out")?;
    record_input(&s, &mut m, "image", &image_path)?;
    let (provider, edge_cfg) = a.edges.resolve(&s, &mut m)?;
    let depth_cmd: Option<String> = s.get(a.depth_cmd, "depth_cmd")?;
    let disparity = s.switch(a.disparity, "disparity")?;
    let mode = s.get_or(a.mode, "mode", FusionMode::I)?;
    let gf_radius: Option<usize> = s.get(a.gf_radius, "gf_radius")?;
    let gf_eps = s.get_or(a.gf_eps, "gf_eps", GuidedFilterParams::DEFAULT_EPS)?;
    let swap_stage1 = s.switch(a.swap_stage1, "swap_stage1")?;
    let residual_scale = s.get_or(a.residual_scale, "residual_scale", FusionConfig::default().residual_scale)?;
    let lfm_path: Option<PathBuf> = s.get(a.lfm_weights, "lfm_weights")?;
    let dcm_path: Option<PathBuf> = s.get(a.dcm_weights, "dcm_weights")?;
    let seed = s.get_or(a.seed, "seed", 0u64)?;
    let depth_flags = [
        ("depth", s.get(a.depth, "depth")?),
        ("depth_edge", s.get(a.depth_edge, "depth_edge")?),
        ("depth_highlighted", s.get(a.depth_highlighted, "depth_highlighted")?),
    ];
    for (key, p) in &depth_flags {
        match p {
            Some(p) => record_input(&s, &mut m, key, p)?,
            None if depth_cmd.is_none() => {
                return Err(Usage(format!("--{} or --depth-cmd is required", key.replace('_', "-"))).into())
            }
            None => {}
        }
    }
    m.set_opt("depth_cmd", depth_cmd.as_ref());
    m.set("disparity", disparity);
    let lfm = load_model(&s, &mut m, "lfm_weights", lfm_path.as_deref(), mode.needs_fusion_net(), load_lfm)?;
    let dcm = load_model(&s, &mut m, "dcm_weights", dcm_path.as_deref(), mode.needs_dcm(), load_dcm)?;
    warn_unused(&s);

    let image = load_image(&image_path)?;
    let gf = GuidedFilterParams {
        radius: gf_radius.unwrap_or_else(|| GuidedFilterParams::for_width(image.width()).radius),
        eps: gf_eps,
    };
    gf.validate()?;
    let cfg = FusionConfig {
        mode,
        guided: Some(gf),
        swap_stage1,
        residual_scale,
    };
    m.set("mode", mode);
    m.set("gf_radius", gf.radius);
    m.set("gf_eps", gf.eps);
    m.set("swap_stage1", swap_stage1);
    m.set("residual_scale", residual_scale);
    m.set("seed", seed);
    m.set("out", out.display());

    let stage = edge_stage(&image, &provider.load()?, &edge_cfg)?;
    create_dir(&out)?;
    let [(_, p0), (_, p1), (_, p2)] = depth_flags;
    let inputs = [
        DepthInput { key: "depth", flag: p0, source: &image },
        DepthInput { key: "depth_edge", flag: p1, source: &stage.edge_image },
        DepthInput { key: "depth_highlighted", flag: p2, source: &stage.highlighted },
    ];
    let mut depths = Vec::with_capacity(3);
    for input in inputs {
        let d = match input.flag {
            Some(p) => read_depth(&p)?,
            None => {
                let cmd = depth_cmd.as_deref().expect("checked above");
                let work = out.join("provider");
                create_dir(&work)?;
                let d = run_depth_command(
                    cmd,
                    input.source,
                    &work.join(format!("{}_input.png", input.key)),
                    &work.join(format!("{}.pfm", input.key)),
                )?;
                m.output(input.key, &work.join(format!("{}.pfm", input.key)));
                d
            }
        };
        if d.dims() != image.dims() {
            bail!("{} is {:?} but the image is {:?}", input.key, d.dims(), image.dims());
        }
        depths.push(if disparity { flip_disparity(&d) } else { d });
    }

    let lfm = lfm.map_or_else(|| default_net(mode.needs_fusion_net(), "fusion", || FusionNet::init(FusionNetSpec::default(), seed)), |n| Ok(Some(n)))?;
    let dcm = dcm.map_or_else(|| default_net(mode.needs_dcm(), "consistency", || DcmNet::init(DcmNetSpec::default(), seed)), |n| Ok(Some(n)))?;
    let models = FusionModels {
        fusion_net: lfm.as_ref(),
        dcm: dcm.as_ref(),
    };
    let fused = fuse_depths(&depths[0], &depths[1], &depths[2], &cfg, models)?;

    write_map(&mut m, &out, "edges", &stage.edges)?;
    write_png(&mut m, &out, "edges", &stage.edge_image)?;
    write_png(&mut m, &out, "mask", &stage.mask.to_image())?;
    write_png(&mut m, &out, "highlighted", &stage.highlighted)?;
    if let Some(s1) = &fused.stage1 {
        write_map(&mut m, &out, "stage1", s1)?;
    }
    write_depth(&mut m, &out, "d_fuse", &fused.fused)?;
    write_depth(&mut m, &out, "d_out", &fused.refined)?;
    m.write(&out.join("manifest.txt"))?;
    println!("pipeline: mode {mode}, wrote {}", out.display());
    Ok(())
}

fn write_depth(m: &mut Manifest, out: &Path, name: &str, d: &DepthMap) -> Result<()> {
    write_map(m, out, name, d)?;
    write_png(m, out, name, &colorize(d))
}

fn load_model<T>(
    s: &Settings,
    m: &mut Manifest,
    key: &str,
    path: Option<&Path>,
    needed: bool,
    load: fn(&Path) -> Result<T>,
) -> Result<Option<T>> {
    match path {
        Some(p) if needed => {
            record_input(s, m, key, p)?;
            Ok(Some(load(p)?))
        }
        Some(p) => {
            eprintln!("warning: {key} {} is not used by this mode", p.display());
            Ok(None)
        }
        None => Ok(None),
    }
}

/// A freshly initialized network, whose zero output layer makes it the
/// identity residual, when the mode needs one and no weights were given.
fn default_net<T>(needed: bool, what: &str, init: impl FnOnce() -> depthfuse::Result<T>) -> Result<Option<T>> {
    if !needed {
        return Ok(None);
    }
    eprintln!("warning: no {what} network weights given; using the zero-residual initialization");
    Ok(Some(init()?))
}
