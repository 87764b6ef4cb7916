//! Depth consistency refinement: the residual update `D_out = D_fuse +
//! DCM(D_fuse, D)`, the sequential update across a scale group, the
//! occlusion-weighted consistency loss and the trimmed scale-shift-invariant
//! depth loss.

mod loss;
mod net;
mod train;

pub use loss::{loss_ssi_trim, DEFAULT_TRIM};
pub use net::{DcmNet, DcmNetSpec, DEFAULT_RESIDUAL_SCALE};
pub use train::{train_dcm, DcmLossRecord, DcmTrainConfig, DcmTrainOutcome};

use std::path::Path;

use crate::colormap::colorize;
use crate::error::{check_shape, Error, Result};
use crate::flow::{flow_for_scale, FlowProviderConfig};
use crate::io::{read_flo, read_pfm, write_flo, write_pfm};
use crate::maps::{DepthMap, FlowField, Image, Raster};
use crate::sampling::{resize_bilinear, warp_backward};

/// Members of a scale group.
pub const GROUP_SIZE: usize = 5;

pub const DEFAULT_ALPHA: f64 = 50.0;

/// Anything that produces a residual for `d_a` given `d_b`.
pub trait ResidualModel {
    fn residual(&self, d_a: &DepthMap, d_b: &DepthMap) -> Result<DepthMap>;
}

/// A [`DcmNet`] with a fixed residual scale.
#[derive(Debug, Clone, Copy)]
pub struct ScaledDcm<'a> {
    pub net: &'a DcmNet,
    pub residual_scale: f32,
}

impl ResidualModel for ScaledDcm<'_> {
    fn residual(&self, d_a: &DepthMap, d_b: &DepthMap) -> Result<DepthMap> {
        self.net.residual(d_a, d_b, self.residual_scale)
    }
}

/// Five depths of one scene at a common resolution, their colourizations
/// and the backward flows `F_{s⇒s−1}` (index 0 holds the flow for `s = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGroup {
    pub depths: Vec<DepthMap>,
    pub visualized: Vec<Image>,
    pub flows: Vec<Option<FlowField>>,
}

impl ScaleGroup {
    /// Group with colourized visualizations and no flows.
    pub fn new(depths: Vec<DepthMap>) -> Result<Self> {
        let visualized = depths.iter().map(colorize).collect();
        let g = Self {
            depths,
            visualized,
            flows: vec![None; GROUP_SIZE - 1],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.len() != GROUP_SIZE || self.visualized.len() != GROUP_SIZE || self.flows.len() != GROUP_SIZE - 1 {
            return Err(Error::arg(format!(
                "scale group needs {GROUP_SIZE} depths and visualizations and {} flow slots",
                GROUP_SIZE - 1
            )));
        }
        let dims = self.depths[0].dims();
        for d in &self.depths {
            check_shape(dims, d.dims())?;
        }
        for v in &self.visualized {
            check_shape(dims, v.dims())?;
        }
        for f in self.flows.iter().flatten() {
            check_shape(dims, f.dims())?;
            if f.data().iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::arg("scale group flow has non-finite values"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depths[0].dims()
    }

    /// Zero flows for every scale.
    pub fn with_zero_flows(mut self) -> Self {
        let (w, h) = self.dims();
        self.flows = vec![Some(FlowField::zeros(w, h)); GROUP_SIZE - 1];
        self
    }

    /// Fills missing flows from `config`; file templates resolve in `dir`.
    pub fn resolve_flows(&mut self, config: &FlowProviderConfig, dir: Option<&Path>) -> Result<()> {
        for s in 2..=GROUP_SIZE {
            if self.flows[s - 2].is_none() {
                let f = flow_for_scale(&self.visualized[s - 1], &self.visualized[s - 2], config, dir, s)?;
                self.flows[s - 2] = Some(f);
            }
        }
        Ok(())
    }

    pub(crate) fn flows_complete(&self) -> Result<Vec<&FlowField>> {
        self.flows
            .iter()
            .enumerate()
            .map(|(i, f)| f.as_ref().ok_or_else(|| Error::arg(format!("missing flow for scale {}", i + 2))))
            .collect()
    }

    pub(crate) fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            depths: self.depths.iter().map(|d| d.crop(x0, y0, w, h)).collect::<Result<_>>()?,
            visualized: self.visualized.iter().map(|v| v.crop(x0, y0, w, h)).collect::<Result<_>>()?,
            flows: self
                .flows
                .iter()
                .map(|f| f.as_ref().map(|f| f.crop(x0, y0, w, h)).transpose())
                .collect::<Result<_>>()?,
        })
    }
}

/// Weight for a squared colour difference.
pub fn occlusion_weight(diff_sq: f64, alpha: f64) -> f64 {
    (-alpha * diff_sq).exp()
}

/// Per-pixel `exp(−α·|v_s − v̂|²)` with the Euclidean norm over channels,
/// in double precision.
pub fn occlusion_weights_f64(v_s: &Image, v_prev_warped: &Image, alpha: f64) -> Result<Vec<f64>> {
    check_shape(v_s.dims(), v_prev_warped.dims())?;
    Ok(v_s
        .data()
        .chunks_exact(3)
        .zip(v_prev_warped.data().chunks_exact(3))
        .map(|(a, b)| {
            let d2: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            occlusion_weight(d2, alpha)
        })
        .collect())
}

/// [`occlusion_weights_f64`] as a weight map.
pub fn occlusion_weights(v_s: &Image, v_prev_warped: &Image, alpha: f64) -> Result<DepthMap> {
    let w = occlusion_weights_f64(v_s, v_prev_warped, alpha)?;
    Ok(DepthMap::from_computed(
        v_s.width(),
        v_s.height(),
        w.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Mean over jointly valid pixels of `M·|D_s − D̂_{s−1}|`.
fn consistency_term(d_s: &DepthMap, d_prev_warped: &DepthMap, weights: &[f64]) -> f64 {
    let valid: Vec<usize> = (0..d_s.pixel_count())
        .filter(|&i| d_s.is_valid(i) && d_prev_warped.is_valid(i))
        .collect();
    if valid.is_empty() {
        return 0.0;
    }
    let sum: f64 = valid
        .iter()
        .map(|&i| weights[i] * (d_s.data()[i] as f64 - d_prev_warped.data()[i] as f64).abs())
        .sum();
    sum / valid.len() as f64
}

/// Occlusion weights for every scale, from the group's visualizations.
pub(crate) fn group_weights(group: &ScaleGroup, alpha: f64) -> Result<Vec<Vec<f64>>> {
    let flows = group.flows_complete()?;
    (2..=GROUP_SIZE)
        .map(|s| {
            let v_hat = warp_backward(&group.visualized[s - 2], flows[s - 2])?;
            occlusion_weights_f64(&group.visualized[s - 1], &v_hat, alpha)
        })
        .collect()
}

/// Consistency loss per scale `s = 2..5`.
pub fn consistency_terms(group: &ScaleGroup, alpha: f64) -> Result<Vec<f64>> {
    group.validate()?;
    let flows = group.flows_complete()?;
    let weights = group_weights(group, alpha)?;
    (2..=GROUP_SIZE)
        .map(|s| {
            let d_hat = warp_backward(&group.depths[s - 2], flows[s - 2])?;
            Ok(consistency_term(&group.depths[s - 1], &d_hat, &weights[s - 2]))
        })
        .collect()
}

/// Sum over `s = 2..5` of the mean occlusion-weighted L1 difference between
/// `D_s` and the backward-warped `D_{s−1}`.
pub fn consistency_loss(group: &ScaleGroup, alpha: f64) -> Result<f64> {
    Ok(consistency_terms(group, alpha)?.iter().sum())
}

/// `D_s ← D_s + model(D_s, D_{s−1})` for `s = 2..5` in order, each using the
/// already-updated predecessor.
pub fn sequential_update(group: &ScaleGroup, model: &impl ResidualModel) -> Result<ScaleGroup> {
    group.validate()?;
    let mut out = group.clone();
    for s in 1..GROUP_SIZE {
        let r = model.residual(&out.depths[s], &out.depths[s - 1])?;
        check_shape(out.depths[s].dims(), r.dims())?;
        let d = out.depths[s].zip_map(&r, |a, b| a + b)?;
        out.depths[s] = d;
    }
    Ok(out)
}

/// `d_fuse + model(d_fuse, d_original)`, keeping the mask of `d_fuse`.
pub fn refine(d_fuse: &DepthMap, d_original: &DepthMap, model: &impl ResidualModel) -> Result<DepthMap> {
    check_shape(d_fuse.dims(), d_original.dims())?;
    let r = model.residual(d_fuse, d_original)?;
    d_fuse.zip_map(&r, |a, b| a + b)
}

/// Resizes `image` to each of the five `scales`, obtains a depth per scale
/// from `provider` and resizes every depth to `working` (the smallest scale
/// by area when `None`).
pub fn make_scale_group(
    image: &Image,
    mut provider: impl FnMut(&Image, usize) -> Result<DepthMap>,
    scales: &[(usize, usize)],
    working: Option<(usize, usize)>,
) -> Result<ScaleGroup> {
    if scales.len() != GROUP_SIZE {
        return Err(Error::arg(format!("need {GROUP_SIZE} scales, got {}", scales.len())));
    }
    let (ww, wh) = working.unwrap_or_else(|| *scales.iter().min_by_key(|(w, h)| w * h).expect("five scales"));
    let mut depths = Vec::with_capacity(GROUP_SIZE);
    for (i, &(w, h)) in scales.iter().enumerate() {
        let resized = resize_bilinear(image, w, h)?;
        let d = provider(&resized, i + 1).map_err(|e| Error::Provider(format!("scale {}: {e}", i + 1)))?;
        depths.push(resize_bilinear(&d, ww, wh)?);
    }
    ScaleGroup::new(depths)
}

/// Reads `d1.pfm..d5.pfm` and any present `f2.flo..f5.flo` from `dir`.
pub fn load_scale_group(dir: &Path) -> Result<ScaleGroup> {
    let depths = (1..=GROUP_SIZE)
        .map(|s| read_pfm::<DepthMap>(dir.join(format!("d{s}.pfm"))))
        .collect::<Result<Vec<_>>>()?;
    let mut group = ScaleGroup::new(depths)?;
    for s in 2..=GROUP_SIZE {
        let path = dir.join(format!("f{s}.flo"));
        if path.exists() {
            group.flows[s - 2] = Some(read_flo(&path)?);
        }
    }
    group.validate()?;
    Ok(group)
}

/// Writes a group in the layout read by [`load_scale_group`].
pub fn write_scale_group(dir: &Path, group: &ScaleGroup) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (s, d) in group.depths.iter().enumerate() {
        write_pfm(dir.join(format!("d{}.pfm", s + 1)), d)?;
    }
    for (s, f) in group.flows.iter().enumerate() {
        if let Some(f) = f {
            write_flo(dir.join(format!("f{}.flo", s + 2)), f)?;
        }
    }
    Ok(())
}

/// Every subdirectory of `dir`, sorted by name, as a scale group.
pub fn load_dcm_dataset(dir: &Path) -> Result<Vec<ScaleGroup>> {
    let mut subdirs: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    subdirs.iter().map(|d| load_scale_group(d)).collect()
}
