//! File-based providers: learned edge maps, depth maps and the optional
//! per-image depth command hook.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use depthfuse::io::{read_pfm, save_image};
use depthfuse::pipeline::EdgeSource;
use depthfuse::{DepthMap, EdgeMap, Image, Raster};

use crate::exit::{require, Usage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeProvider {
    Sobel,
    File(PathBuf),
    Hybrid(PathBuf),
}

impl FromStr for EdgeProvider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "sobel" {
            return Ok(Self::Sobel);
        }
        let (kind, path) = s
            .split_once(':')
            .filter(|(_, p)| !p.is_empty())
            .ok_or_else(|| format!("unknown edge provider {s:?} (sobel|file:<path>|hybrid:<path>)"))?;
        match kind {
            "file" => Ok(Self::File(path.into())),
            "hybrid" => Ok(Self::Hybrid(path.into())),
            _ => Err(format!("unknown edge provider {s:?} (sobel|file:<path>|hybrid:<path>)")),
        }
    }
}

impl std::fmt::Display for EdgeProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Sobel => f.write_str("sobel"),
            Self::File(p) => write!(f, "file:{}", p.display()),
            Self::Hybrid(p) => write!(f, "hybrid:{}", p.display()),
        }
    }
}

impl EdgeProvider {
    pub fn path(&self) -> Option<&Path> {
        match self {
            Self::Sobel => None,
            Self::File(p) | Self::Hybrid(p) => Some(p),
        }
    }

    pub fn load(&self) -> Result<EdgeSource> {
        let read = |p: &Path| -> Result<EdgeMap> {
            require(p)?;
            read_pfm(p).with_context(|| format!("reading learned edges {}", p.display()))
        };
        Ok(match self {
            Self::Sobel => EdgeSource::Sobel,
            Self::File(p) => EdgeSource::Learned(read(p)?),
            Self::Hybrid(p) => EdgeSource::Hybrid(read(p)?),
        })
    }
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    require(path)?;
    read_pfm(path).with_context(|| format!("reading depth {}", path.display()))
}

/// `max − d` over valid pixels, for providers that emit inverse depth.
pub fn flip_disparity(d: &DepthMap) -> DepthMap {
    let max = d.min_max().map_or(0.0, |(_, hi)| hi);
    d.map(|v| max - v)
}

/// Runs `template` through the shell with `{input}` and `{output}`
/// replaced, after writing `image` to `input`, and reads the PFM at
/// `output`.
pub fn run_depth_command(template: &str, image: &Image, input: &Path, output: &Path) -> Result<DepthMap> {
    if !template.contains("{input}") || !template.contains("{output}") {
        return Err(Usage(format!("depth command {template:?} must contain {{input}} and {{output}}")).into());
    }
    save_image(input, image)?;
    let _ = std::fs::remove_file(output);
    let line = template
        .replace("{input}", &shell_quote(input))
        .replace("{output}", &shell_quote(output));
    let status = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .status()
        .with_context(|| format!("launching depth command {line:?}"))?;
    if !status.success() {
        bail!("depth command {line:?} failed with {status}");
    }
    if !output.exists() {
        bail!("depth command {line:?} did not write {}", output.display());
    }
    let d: DepthMap = read_pfm(output).with_context(|| format!("reading {}", output.display()))?;
    if d.dims() != image.dims() {
        bail!(
            "depth command output {} is {:?}, image is {:?}",
            output.display(),
            d.dims(),
            image.dims()
        );
    }
    Ok(d)
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}
