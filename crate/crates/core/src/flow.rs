//! Optical-flow providers: zero flow, `.flo` files, and coarse-to-fine block
//! matching.
//!
//! A flow `f` between `v_a` and `v_b` satisfies `v_b(x + f(x)) ≈ v_a(x)`, so
//! backward-warping `v_b` by `f` lands it on the grid of `v_a`.

use std::path::{Path, PathBuf};

use crate::error::{check_shape, Error, Result};
use crate::io::read_flo;
use crate::maps::{FlowField, Image, Raster};
use crate::sampling::resize_bilinear;

pub use crate::sampling::warp_backward;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowKind {
    Identity,
    /// Path template; `{s}` is replaced by the scale index.
    File(String),
    BlockMatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowProviderConfig {
    pub kind: FlowKind,
    pub levels: usize,
    pub block: usize,
    pub search: usize,
}

impl Default for FlowProviderConfig {
    fn default() -> Self {
        Self {
            kind: FlowKind::BlockMatch,
            levels: 3,
            block: 7,
            search: 4,
        }
    }
}

impl FlowProviderConfig {
    pub fn identity() -> Self {
        Self {
            kind: FlowKind::Identity,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::Config("flow pyramid levels must be >= 1".into()));
        }
        if self.block < 3 || self.block % 2 == 0 {
            return Err(Error::Config(format!("flow block {} must be odd and >= 3", self.block)));
        }
        if self.search < 1 {
            return Err(Error::Config("flow search radius must be >= 1".into()));
        }
        Ok(())
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "block-match" => Ok(Self::BlockMatch),
            _ => match s.strip_prefix("file:") {
                Some(t) if !t.is_empty() => Ok(Self::File(t.to_owned())),
                _ => Err(Error::arg(format!(
                    "unknown flow provider {s:?} (identity|block-match|file:<template>)"
                ))),
            },
        }
    }
}

/// Expands `{s}` in a file template and resolves it against `dir`.
pub fn flow_path(template: &str, dir: Option<&Path>, scale: usize) -> PathBuf {
    let name = template.replace("{s}", &scale.to_string());
    match dir {
        Some(d) => d.join(name),
        None => PathBuf::from(name),
    }
}

/// Flow from `v_a` to `v_b` for scale index `scale` (used only by the file
/// provider, resolved against `dir`).
pub fn flow_for_scale(
    v_a: &Image,
    v_b: &Image,
    config: &FlowProviderConfig,
    dir: Option<&Path>,
    scale: usize,
) -> Result<FlowField> {
    check_shape(v_a.dims(), v_b.dims())?;
    config.validate()?;
    match &config.kind {
        FlowKind::Identity => Ok(FlowField::zeros(v_a.width(), v_a.height())),
        FlowKind::File(t) => {
            let path = flow_path(t, dir, scale);
            let flow = read_flo(&path).map_err(|e| Error::Provider(format!("{}: {e}", path.display())))?;
            if flow.dims() != v_a.dims() {
                return Err(Error::Provider(format!(
                    "{} is {:?}, expected {:?}",
                    path.display(),
                    flow.dims(),
                    v_a.dims()
                )));
            }
            Ok(flow)
        }
        FlowKind::BlockMatch => Ok(block_match(v_a, v_b, config)),
    }
}

/// [`flow_for_scale`] for providers that do not depend on the scale index;
/// file templates are used verbatim as a path.
pub fn estimate_flow(v_a: &Image, v_b: &Image, config: &FlowProviderConfig) -> Result<FlowField> {
    flow_for_scale(v_a, v_b, config, None, 0)
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn at(&self, x: i64, y: i64, c: usize) -> f32 {
        let x = x.clamp(0, self.w as i64 - 1) as usize;
        let y = y.clamp(0, self.h as i64 - 1) as usize;
        self.data[(y * self.w + x) * 3 + c]
    }
}

fn plane(img: &Image) -> Plane {
    Plane {
        w: img.width(),
        h: img.height(),
        data: img.data().to_vec(),
    }
}

fn block_cost(a: &Plane, b: &Plane, x: i64, y: i64, dx: i64, dy: i64, r: i64) -> f64 {
    let mut cost = 0.0f64;
    for v in -r..=r {
        for u in -r..=r {
            for c in 0..3 {
                let d = a.at(x + u, y + v, c) as f64 - b.at(x + u + dx, y + v + dy, c) as f64;
                cost += d * d;
            }
        }
    }
    cost
}

/// Search offsets sorted by length, then row, then column, so the first
/// strictly best candidate is the shortest one among ties.
fn search_order(s: i64) -> Vec<(i64, i64)> {
    let mut v: Vec<(i64, i64)> = (-s..=s).flat_map(|dy| (-s..=s).map(move |dx| (dx, dy))).collect();
    v.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    v
}

fn match_level(a: &Plane, b: &Plane, init: &[(i64, i64)], cfg: &FlowProviderConfig, refine: bool) -> (Vec<(i64, i64)>, Vec<[f32; 2]>) {
    let r = (cfg.block / 2) as i64;
    let order = search_order(cfg.search as i64);
    let mut best = Vec::with_capacity(a.w * a.h);
    let mut sub = Vec::with_capacity(a.w * a.h);
    for y in 0..a.h as i64 {
        for x in 0..a.w as i64 {
            let (ix, iy) = init[y as usize * a.w + x as usize];
            let mut arg = (ix, iy);
            let mut min = f64::INFINITY;
            for &(dx, dy) in &order {
                let c = block_cost(a, b, x, y, ix + dx, iy + dy, r);
                if c < min {
                    min = c;
                    arg = (ix + dx, iy + dy);
                }
            }
            best.push(arg);
            if refine {
                let para = |cm: f64, c0: f64, cp: f64| {
                    let den = cm - 2.0 * c0 + cp;
                    if den > 0.0 {
                        ((cm - cp) / (2.0 * den)).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    }
                };
                let ox = para(
                    block_cost(a, b, x, y, arg.0 - 1, arg.1, r),
                    min,
                    block_cost(a, b, x, y, arg.0 + 1, arg.1, r),
                );
                let oy = para(
                    block_cost(a, b, x, y, arg.0, arg.1 - 1, r),
                    min,
                    block_cost(a, b, x, y, arg.0, arg.1 + 1, r),
                );
                sub.push([(arg.0 as f64 + ox) as f32, (arg.1 as f64 + oy) as f32]);
            }
        }
    }
    (best, sub)
}

/// Coarse-to-fine SSD block matching with parabolic sub-pixel refinement at
/// the finest level.
pub fn block_match(v_a: &Image, v_b: &Image, cfg: &FlowProviderConfig) -> FlowField {
    let (w, h) = v_a.dims();
    let mut pyramid = vec![(v_a.clone(), v_b.clone())];
    while pyramid.len() < cfg.levels {
        let (pa, pb) = pyramid.last().expect("non-empty");
        let (nw, nh) = (pa.width().div_ceil(2), pa.height().div_ceil(2));
        if nw < cfg.block || nh < cfg.block {
            break;
        }
        let next = (
            resize_bilinear(pa, nw, nh).expect("non-zero size"),
            resize_bilinear(pb, nw, nh).expect("non-zero size"),
        );
        pyramid.push(next);
    }
    let (cw, ch) = pyramid.last().expect("non-empty").0.dims();
    let mut init = vec![(0i64, 0i64); cw * ch];
    let mut dims = (cw, ch);
    for (level, (pa, pb)) in pyramid.iter().enumerate().rev() {
        let (lw, lh) = pa.dims();
        if (lw, lh) != dims {
            // nearest-neighbour upsampling of the coarser integer flow, doubled
            let (pw, ph) = dims;
            init = (0..lw * lh)
                .map(|i| {
                    let (x, y) = (i % lw, i / lw);
                    let src = ((y * ph / lh).min(ph - 1)) * pw + (x * pw / lw).min(pw - 1);
                    (init[src].0 * 2, init[src].1 * 2)
                })
                .collect();
            dims = (lw, lh);
        }
        let (best, sub) = match_level(&plane(pa), &plane(pb), &init, cfg, level == 0);
        if level == 0 {
            return FlowField::new(w, h, sub).expect("finite flow");
        }
        init = best;
    }
    unreachable!("pyramid has a finest level")
}
