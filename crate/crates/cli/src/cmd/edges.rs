use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use depthfuse::io::load_image;
use depthfuse::pipeline::edge_stage;
use depthfuse::Raster;

use super::{create_dir, record_input, required_path, warn_unused, write_map, write_png, EdgeOpts};
use crate::config::Settings;
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct EdgesArgs {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input RGB image (PNG).
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub edges: EdgeOpts,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: EdgesArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let mut m = Manifest::new("edges");
    let image_path = required_path(&s, a.image, "image")?;
    let out = required_path(&s, a.out, "out")?;
    record_input(&s, &mut m, "image", &image_path)?;
    let (provider, cfg) = a.edges.resolve(&s, &mut m)?;
    warn_unused(&s);
    let image = load_image(&image_path)?;
    let stage = edge_stage(&image, &provider.load()?, &cfg)?;
    create_dir(&out)?;
    m.set("out", out.display());
    write_map(&mut m, &out, "edges", &stage.edges)?;
    write_png(&mut m, &out, "edges", &stage.edge_image)?;
    write_png(&mut m, &out, "mask", &stage.mask.to_image())?;
    write_png(&mut m, &out, "highlighted", &stage.highlighted)?;
    m.write(&out.join("manifest.txt"))?;
    println!("edges: {} edge pixels of {}", stage.mask.count(), image.pixel_count());
    Ok(())
}
