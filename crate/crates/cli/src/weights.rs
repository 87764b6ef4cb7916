//! Weight files and their `.spec` sidecars holding the architecture.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use depthfuse::dcm::{DcmNet, DcmNetSpec};
use depthfuse::lfm::{FusionNet, FusionNetSpec};
use depthfuse::nn::ParamSet;

use crate::config::parse_pairs;
use crate::exit::{require, Usage};

pub fn spec_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".spec");
    PathBuf::from(s)
}

fn write_spec(weights: &Path, lines: &[(&str, String)]) -> Result<()> {
    let text: String = lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let path = spec_path(weights);
    depthfuse::io::write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn read_spec(weights: &Path, kind: &str) -> Result<Option<std::collections::BTreeMap<String, String>>> {
    let path = spec_path(weights);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let map = parse_pairs(&text)?;
    match map.get("kind").map(String::as_str) {
        Some(k) if k == kind => Ok(Some(map)),
        other => Err(Usage(format!(
            "{} describes {:?} weights, expected {kind}",
            path.display(),
            other.unwrap_or("unknown")
        ))
        .into()),
    }
}

fn field<T: std::str::FromStr>(map: &std::collections::BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| Usage(format!("bad spec value {key}={v}")).into()),
    }
}

pub fn save_lfm(path: &Path, net: &FusionNet) -> Result<()> {
    net.params().save(path).with_context(|| format!("writing {}", path.display()))?;
    let s = net.spec();
    write_spec(
        path,
        &[
            ("kind", "lfm".into()),
            ("base_channels", s.base_channels.to_string()),
            ("depth_levels", s.depth_levels.to_string()),
            ("groups", s.groups.to_string()),
            ("slope", s.slope.to_string()),
        ],
    )
}

pub fn save_dcm(path: &Path, net: &DcmNet) -> Result<()> {
    net.params().save(path).with_context(|| format!("writing {}", path.display()))?;
    let s = net.spec();
    write_spec(
        path,
        &[
            ("kind", "dcm".into()),
            ("base_channels", s.base_channels.to_string()),
            ("down_stages", s.down_stages.to_string()),
            ("res_blocks", s.res_blocks.to_string()),
            ("up_stages", s.up_stages.to_string()),
            ("slope", s.slope.to_string()),
        ],
    )
}

fn load_params(path: &Path) -> Result<ParamSet> {
    require(path)?;
    ParamSet::load(path).with_context(|| format!("reading weights {}", path.display()))
}

/// Loads fusion-network weights; without a sidecar the default architecture
/// is assumed.
pub fn load_lfm(path: &Path) -> Result<FusionNet> {
    let params = load_params(path)?;
    let d = FusionNetSpec::default();
    let spec = match read_spec(path, "lfm")? {
        None => d,
        Some(m) => FusionNetSpec {
            base_channels: field(&m, "base_channels", d.base_channels)?,
            depth_levels: field(&m, "depth_levels", d.depth_levels)?,
            groups: field(&m, "groups", d.groups)?,
            slope: field(&m, "slope", d.slope)?,
        },
    };
    FusionNet::from_params(spec, params).with_context(|| format!("loading {}", path.display()))
}

pub fn load_dcm(path: &Path) -> Result<DcmNet> {
    let params = load_params(path)?;
    let d = DcmNetSpec::default();
    let spec = match read_spec(path, "dcm")? {
        None => d,
        Some(m) => DcmNetSpec {
            base_channels: field(&m, "base_channels", d.base_channels)?,
            down_stages: field(&m, "down_stages", d.down_stages)?,
            res_blocks: field(&m, "res_blocks", d.res_blocks)?,
            up_stages: field(&m, "up_stages", d.up_stages)?,
            slope: field(&m, "slope", d.slope)?,
        },
    };
    DcmNet::from_params(spec, params).with_context(|| format!("loading {}", path.display()))
}
