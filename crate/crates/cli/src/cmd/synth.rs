use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use depthfuse::dcm::write_scale_group;
use depthfuse::edges::HybridEdgeConfig;
use depthfuse::io::{load_image, save_image, write_pfm};
use depthfuse::lfm::write_lfm_dataset;
use depthfuse::pipeline::EdgeSource;
use depthfuse::synth::{learned_edge_standin, scene, standin_depths, toy_dcm_dataset, toy_lfm_dataset};

use super::create_dir;
use crate::manifest::Manifest;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SynthKind {
    /// Scenes with image, ground truth, learned-edge stand-in and the three
    /// initial depths.
    Scenes,
    /// Pseudo-labelled pairs for `train-lfm`.
    Lfm,
    /// Multi-scale depth groups for `train-dcm`.
    Dcm,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Side length in pixels (at least 32).
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(a: SynthArgs) -> Result<()> {
    if a.size < 32 {
        return Err(crate::exit::Usage(format!("--size {} must be at least 32", a.size)).into());
    }
    create_dir(&a.out)?;
    match a.kind {
        SynthKind::Scenes => {
            for i in 0..a.count {
                let dir = a.out.join(format!("scene{i:04}"));
                create_dir(&dir)?;
                let sc = scene(a.seed * 1000 + i as u64, a.size, a.size);
                let image_path = dir.join("image.png");
                save_image(&image_path, &sc.image)?;
                let image = load_image(&image_path)?;
                let learned = learned_edge_standin(&image);
                let (_, [d, de, deh]) =
                    standin_depths(&image, &EdgeSource::Hybrid(learned.clone()), &HybridEdgeConfig::default())?;
                write_pfm(dir.join("gt.pfm"), &sc.gt)?;
                write_pfm(dir.join("edges.pfm"), &learned)?;
                write_pfm(dir.join("d.pfm"), &d)?;
                write_pfm(dir.join("d_edge.pfm"), &de)?;
                write_pfm(dir.join("d_highlighted.pfm"), &deh)?;
            }
        }
        SynthKind::Lfm => write_lfm_dataset(&a.out, &toy_lfm_dataset(a.count, a.size, a.seed)?)
            .with_context(|| format!("writing {}", a.out.display()))?,
        SynthKind::Dcm => {
            for (i, g) in toy_dcm_dataset(a.count, a.size, a.seed)?.iter().enumerate() {
                write_scale_group(&a.out.join(format!("group{i:04}")), g)?;
            }
        }
    }
    let mut m = Manifest::new("synth");
    m.set("kind", format!("{:?}", a.kind).to_lowercase());
    m.set("count", a.count);
    m.set("size", a.size);
    m.set("seed", a.seed);
    m.write(&a.out.join("manifest.txt"))?;
    println!("synth: wrote {} item(s) to {}", a.count, a.out.display());
    Ok(())
}
