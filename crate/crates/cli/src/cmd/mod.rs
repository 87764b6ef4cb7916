pub mod degrade;
pub mod edges;
pub mod eval;
pub mod pipeline;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use depthfuse::edges::HybridEdgeConfig;
use depthfuse::io::{save_image, write_pfm, PfmMap};
use depthfuse::Image;

use crate::config::Settings;
use crate::exit::Usage;
use crate::manifest::{check_recorded_hash, Manifest};
use crate::provider::EdgeProvider;

/// Edge extraction options shared by `edges` and `pipeline`.
#[derive(Args, Debug, Clone, Default)]
pub struct EdgeOpts {
    /// sobel | file:<edges.pfm> | hybrid:<edges.pfm>
    #[arg(long)]
    pub edge_provider: Option<EdgeProvider>,
    /// Binarization threshold on the normalized edge strength.
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Root order of the hybrid fusion.
    #[arg(long)]
    pub n_root: Option<u32>,
}

impl EdgeOpts {
    pub fn resolve(&self, s: &Settings, m: &mut Manifest) -> Result<(EdgeProvider, HybridEdgeConfig)> {
        let d = HybridEdgeConfig::default();
        let provider = s.get_or(self.edge_provider.clone(), "edge_provider", EdgeProvider::Sobel)?;
        let cfg = HybridEdgeConfig {
            n_root: s.get_or(self.n_root, "n_root", d.n_root)?,
            binarize_threshold: s.get_or(self.threshold, "threshold", d.binarize_threshold)?,
            ..d
        };
        cfg.validate()?;
        m.set("edge_provider", &provider);
        if let Some(p) = provider.path() {
            crate::exit::require(p)?;
            check_recorded_hash(s.raw("sha256.edge_provider"), "edge_provider", p)?;
            m.set("sha256.edge_provider", crate::manifest::sha256_file(p)?);
        }
        m.set("threshold", cfg.binarize_threshold);
        m.set("n_root", cfg.n_root);
        Ok((provider, cfg))
    }
}

/// Resolves a required path from its flag or config key.
pub fn required_path(s: &Settings, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
    s.get(flag, key)?
        .ok_or_else(|| Usage(format!("--{} is required", key.replace('_', "-"))).into())
}

/// Records an input after checking it exists and, on replay, that its hash
/// still matches.
pub fn record_input(s: &Settings, m: &mut Manifest, key: &str, path: &Path) -> Result<()> {
    crate::exit::require(path)?;
    check_recorded_hash(s.raw(&format!("sha256.{key}")), key, path)?;
    m.input(key, path)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_map<M: PfmMap>(m: &mut Manifest, dir: &Path, name: &str, map: &M) -> Result<()> {
    let path = dir.join(format!("{name}.pfm"));
    write_pfm(&path, map).with_context(|| format!("writing {}", path.display()))?;
    m.output(&format!("{name}_pfm"), &path);
    Ok(())
}

pub fn write_png(m: &mut Manifest, dir: &Path, name: &str, image: &Image) -> Result<()> {
    let path = dir.join(format!("{name}.png"));
    save_image(&path, image).with_context(|| format!("writing {}", path.display()))?;
    m.output(&format!("{name}_png"), &path);
    Ok(())
}

pub fn warn_unused(s: &Settings) {
    for key in s.unused() {
        eprintln!("warning: config key {key} is not used by this command");
    }
}

pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    depthfuse::io::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// `<path><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
