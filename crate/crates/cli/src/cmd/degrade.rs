use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use depthfuse::degrade::{degrade, Degradation};
use depthfuse::io::{load_image, save_image};

use super::{create_dir, required_path, sibling, warn_unused};
use crate::config::Settings;
use crate::exit::{require, Usage};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A PNG image or a directory of them.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output PNG, or a directory when the input is one.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// gaussian-noise or gaussian-blur.
    #[arg(long)]
    pub kind: Option<String>,
    /// Noise standard deviation (intensity in [0, 1]) or blur sigma in pixels.
    #[arg(long)]
    pub sigma: Option<f32>,
    /// Noise seed; image `k` of a directory uses `seed + k`.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(a: DegradeArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let input = required_path(&s, a.input, "input")?;
    let output = required_path(&s, a.output, "output")?;
    let kind_text = s
        .get(a.kind, "kind")?
        .ok_or_else(|| Usage("--kind is required (gaussian-noise|gaussian-blur)".into()))?;
    let kind: Degradation = kind_text.parse()?;
    let sigma = s.get(a.sigma, "sigma")?.ok_or_else(|| Usage("--sigma is required".into()))?;
    let seed = s.get_or(a.seed, "seed", 0u64)?;
    warn_unused(&s);
    require(&input)?;

    let mut m = Manifest::new("degrade");
    m.set("kind", &kind_text);
    m.set("sigma", sigma);
    m.set("seed", seed);
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        create_dir(&output)?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "png"))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                let o = output.join(p.file_name().expect("listed file"));
                (p, o)
            })
            .collect()
    } else {
        if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        vec![(input.clone(), output.clone())]
    };
    for (k, (src, dst)) in jobs.iter().enumerate() {
        one(src, dst, kind, sigma, seed + k as u64)?;
        m.input(&format!("input{k}"), src)?;
        m.output(&format!("image{k}"), dst);
    }
    let manifest = if input.is_dir() {
        output.join("manifest.txt")
    } else {
        sibling(&output, ".manifest.txt")
    };
    m.write(&manifest)?;
    println!("degrade: wrote {} image(s)", jobs.len());
    Ok(())
}

fn one(src: &Path, dst: &Path, kind: Degradation, sigma: f32, seed: u64) -> Result<()> {
    let img = load_image(src).with_context(|| format!("reading {}", src.display()))?;
    let out = degrade(&img, kind, sigma, seed)?;
    save_image(dst, &out).with_context(|| format!("writing {}", dst.display()))
}
