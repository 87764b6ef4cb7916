use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use depthfuse::io::{load_image, read_pfm};
use depthfuse::metrics::{canny, compute_metrics, depth_edge_mask, depth_to_grey, MetricReport, OrdConfig, CANNY_HIGH, CANNY_LOW};
use depthfuse::DepthMap;

use super::{required_path, warn_unused, write_csv};
use crate::config::Settings;
use crate::exit::{require, MissingInput};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of predicted depths (`<name>.pfm`).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth depths with matching names.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Directory of `<name>.png` images for the Canny mask; the rendered
    /// ground truth is used when absent.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Threshold of the ground-truth depth-edge mask.
    #[arg(long)]
    pub edge_threshold: Option<f32>,
    /// Evaluate without the least-squares scale and shift fit.
    #[arg(long)]
    pub no_align: bool,
    /// Point pairs sampled for the ordinal error.
    #[arg(long)]
    pub ord_pairs: Option<usize>,
    /// Depth ratio treated as equal for the ordinal error.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV with one row per image and a final mean row.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

pub const CSV_HEADER_PREFIX: &str = "name";

pub fn run(a: EvalArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let pred_dir = required_path(&s, a.pred, "pred")?;
    let gt_dir = required_path(&s, a.gt, "gt")?;
    require(&pred_dir)?;
    require(&gt_dir)?;
    let images: Option<PathBuf> = s.get(a.images, "images")?;
    if let Some(d) = &images {
        require(d)?;
    }
    let threshold = s.get_or(a.edge_threshold, "edge_threshold", 0.3f32)?;
    let align = !s.switch(a.no_align, "no_align")?;
    let od = OrdConfig::default();
    let ord = OrdConfig {
        pair_count: s.get_or(a.ord_pairs, "ord_pairs", od.pair_count)?,
        tau: s.get_or(a.tau, "tau", od.tau)?,
        seed: s.get_or(a.seed, "seed", od.seed)?,
    };
    let metrics_out: Option<PathBuf> = s.get(a.metrics_out, "metrics_out")?;
    warn_unused(&s);

    let preds = pfm_files(&pred_dir)?;
    let gts = pfm_files(&gt_dir)?;
    for name in preds.keys().filter(|n| !gts.contains_key(*n)) {
        eprintln!("warning: {name} has no ground truth in {}; skipped", gt_dir.display());
    }
    for name in gts.keys().filter(|n| !preds.contains_key(*n)) {
        eprintln!("warning: {name} has no prediction in {}; skipped", pred_dir.display());
    }
    let names: Vec<&String> = preds.keys().filter(|n| gts.contains_key(*n)).collect();
    if names.is_empty() {
        return Err(anyhow::Error::new(MissingInput(pred_dir.join("*.pfm"))).context("no prediction has a matching ground truth"));
    }
    let mut rows = Vec::new();
    for name in names {
        match evaluate(&preds[name], &gts[name], images.as_deref(), name, threshold, &ord, align) {
            Ok(r) => rows.push((name.clone(), r)),
            Err(e) => eprintln!("warning: {name}: {e:#}; skipped"),
        }
    }
    if rows.is_empty() {
        bail!("every image pair failed to evaluate");
    }
    let header = format!("{CSV_HEADER_PREFIX},{}", MetricReport::CSV_HEADER);
    let mut lines: Vec<String> = rows.iter().map(|(n, r)| format!("{n},{}", r.to_csv())).collect();
    let mean = mean_row(rows.iter().map(|(_, r)| r));
    lines.push(format!("mean,{}", mean.join(",")));
    println!("{header}");
    for l in &lines {
        println!("{l}");
    }
    print_table(&mean);
    if let Some(path) = metrics_out {
        write_csv(&path, &header, lines)?;
        let mut m = Manifest::new("eval");
        m.set("pred", pred_dir.display());
        m.set("gt", gt_dir.display());
        m.set_opt("images", images.as_ref().map(|p| p.display()));
        m.set("edge_threshold", threshold);
        m.set("no_align", !align);
        m.set("ord_pairs", ord.pair_count);
        m.set("tau", ord.tau);
        m.set("seed", ord.seed);
        m.output("metrics", &path);
        m.write(&super::sibling(&path, ".manifest.txt"))?;
    }
    Ok(())
}

fn pfm_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "pfm") {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), p);
            }
        }
    }
    Ok(out)
}

fn evaluate(
    pred: &Path,
    gt: &Path,
    images: Option<&Path>,
    name: &str,
    threshold: f32,
    ord: &OrdConfig,
    align: bool,
) -> Result<MetricReport> {
    let pred: DepthMap = read_pfm(pred).with_context(|| format!("reading {}", pred.display()))?;
    let gt: DepthMap = read_pfm(gt).with_context(|| format!("reading {}", gt.display()))?;
    let edge_mask = depth_edge_mask(&gt, threshold)?;
    let image = match images.map(|d| d.join(format!("{name}.png"))) {
        Some(p) if p.exists() => load_image(&p)?,
        _ => depth_to_grey(&gt),
    };
    let canny_mask = canny(&image, CANNY_LOW, CANNY_HIGH)?;
    Ok(compute_metrics(&pred, &gt, &edge_mask, &canny_mask, ord, align)?)
}

/// Column means in CSV order; a metric column averages the rows where it
/// is defined.
pub fn mean_row<'a>(reports: impl Iterator<Item = &'a MetricReport>) -> Vec<String> {
    let reports: Vec<&MetricReport> = reports.collect();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); 12];
    for r in &reports {
        let v = r.values();
        let extra = [r.scale, r.shift, r.valid_pixels as f64, r.ord_pairs as f64, r.tau];
        for (c, x) in v.into_iter().chain(extra.into_iter().map(Some)).enumerate() {
            cols[c].push(x);
        }
    }
    cols.iter()
        .map(|c| {
            let vals: Vec<f64> = c.iter().flatten().copied().collect();
            if vals.is_empty() {
                "NA".to_owned()
            } else {
                format!("{}", vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect()
}

fn print_table(mean: &[String]) {
    let names = ["AbsRel", "SqRel", "RMSE", "delta1", "ESR", "EcSR", "ORD"];
    println!();
    println!("mean over images");
    for (n, v) in names.iter().zip(mean) {
        let shown = v.parse::<f64>().map_or_else(|_| v.clone(), |x| format!("{x:.6}"));
        println!("{n:>8}  {shown}");
    }
}
