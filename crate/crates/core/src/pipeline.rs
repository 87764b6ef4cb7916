//! End-to-end data flow: edge extraction and edge highlighting of the input
//! image, then fusion of the three initial depths under one of the ablation
//! modes and optional consistency refinement.

use crate::dcm::{refine, DcmNet, ScaledDcm};
use crate::edges::{binarize, edge_highlight, hybrid_fuse, sobel_magnitude, HybridEdgeConfig};
use crate::error::{check_shape, Error, Result};
use crate::guided::{guided_filter, GuidedFilterParams};
use crate::lfm::{fuse_stage1, fuse_stage2, FusionNet, Stage2};
use crate::maps::{BinaryMask, DepthMap, EdgeMap, Image, Raster};

/// Source of the edge map.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeSource {
    Sobel,
    /// Learned edges used as they are.
    Learned(EdgeMap),
    /// Learned edges fused with Sobel edges.
    Hybrid(EdgeMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStage {
    pub edges: EdgeMap,
    pub mask: BinaryMask,
    /// The edge map rendered as a grey image.
    pub edge_image: Image,
    /// The input with masked edge pixels deleted.
    pub highlighted: Image,
}

pub fn extract_edges(image: &Image, source: &EdgeSource, config: &HybridEdgeConfig) -> Result<EdgeMap> {
    config.validate()?;
    match source {
        EdgeSource::Sobel => Ok(sobel_magnitude(image)),
        EdgeSource::Learned(e) => {
            check_shape(image.dims(), e.dims())?;
            Ok(e.clone())
        }
        EdgeSource::Hybrid(e) => {
            check_shape(image.dims(), e.dims())?;
            hybrid_fuse(e, &sobel_magnitude(image), config)
        }
    }
}

pub fn edge_stage(image: &Image, source: &EdgeSource, config: &HybridEdgeConfig) -> Result<EdgeStage> {
    let edges = extract_edges(image, source, config)?;
    let mask = binarize(&edges, config.binarize_threshold)?;
    let highlighted = edge_highlight(image, &mask)?;
    Ok(EdgeStage {
        edge_image: edges.to_image(),
        edges,
        mask,
        highlighted,
    })
}

/// Fusion variants named after the rows of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// `D_e` alone.
    D,
    /// `D_eh` alone.
    E,
    /// `GF(guide D_eh, input D)`.
    F,
    /// `GF(guide D_e, input D)`.
    G,
    /// Stage 1 only.
    H,
    /// Stage 1, then `GF(guide stage1, input D)`.
    I,
    /// Stage 1, then the fusion network.
    J,
    /// As `J`, then consistency refinement against `D`.
    N,
}

impl FusionMode {
    pub const ALL: [FusionMode; 8] = [Self::D, Self::E, Self::F, Self::G, Self::H, Self::I, Self::J, Self::N];

    pub fn letter(self) -> char {
        match self {
            Self::D => 'd',
            Self::E => 'e',
            Self::F => 'f',
            Self::G => 'g',
            Self::H => 'h',
            Self::I => 'i',
            Self::J => 'j',
            Self::N => 'n',
        }
    }

    pub fn needs_fusion_net(self) -> bool {
        matches!(self, Self::J | Self::N)
    }

    pub fn needs_dcm(self) -> bool {
        self == Self::N
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| s.len() == 1 && s.starts_with(m.letter()))
            .ok_or_else(|| Error::arg(format!("unknown fusion mode {s:?} (one of d,e,f,g,h,i,j,n)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Guided-filter parameters; derived from the map width when `None`.
    pub guided: Option<GuidedFilterParams>,
    /// Swaps guide and input of stage 1.
    pub swap_stage1: bool,
    pub residual_scale: f32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::I,
            guided: None,
            swap_stage1: false,
            residual_scale: crate::dcm::DEFAULT_RESIDUAL_SCALE,
        }
    }
}

impl FusionConfig {
    pub fn guided_params(&self, width: usize) -> GuidedFilterParams {
        self.guided.unwrap_or_else(|| GuidedFilterParams::for_width(width))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FusionModels<'a> {
    pub fusion_net: Option<&'a FusionNet>,
    pub dcm: Option<&'a DcmNet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub stage1: Option<DepthMap>,
    pub fused: DepthMap,
    /// Equals `fused` unless the mode refines.
    pub refined: DepthMap,
}

/// Fuses the depths of the image, its edge map and its edge-highlighted
/// version according to `config.mode`.
pub fn fuse_depths(
    d: &DepthMap,
    d_edge: &DepthMap,
    d_edge_highlighted: &DepthMap,
    config: &FusionConfig,
    models: FusionModels<'_>,
) -> Result<FusionOutput> {
    check_shape(d.dims(), d_edge.dims())?;
    check_shape(d.dims(), d_edge_highlighted.dims())?;
    let gf = config.guided_params(d.width());
    gf.validate()?;
    let stage1 = || {
        if config.swap_stage1 {
            fuse_stage1(d_edge_highlighted, d_edge, &gf)
        } else {
            fuse_stage1(d_edge, d_edge_highlighted, &gf)
        }
    };
    let net = || {
        models
            .fusion_net
            .ok_or_else(|| Error::Config(format!("mode {} needs fusion network weights", config.mode)))
    };
    let (s1, fused) = match config.mode {
        FusionMode::D => (None, d_edge.clone()),
        FusionMode::E => (None, d_edge_highlighted.clone()),
        FusionMode::F => (None, guided_filter(d_edge_highlighted, d, &gf)?),
        FusionMode::G => (None, guided_filter(d_edge, d, &gf)?),
        FusionMode::H => {
            let s = stage1()?;
            (Some(s.clone()), s)
        }
        FusionMode::I => {
            let s = stage1()?;
            let f = fuse_stage2(d, &s, Stage2::GuidedFilter(gf))?;
            (Some(s), f)
        }
        FusionMode::J | FusionMode::N => {
            let s = stage1()?;
            let f = fuse_stage2(d, &s, Stage2::Network(net()?))?;
            (Some(s), f)
        }
    };
    let refined = if config.mode.needs_dcm() {
        let dcm = models
            .dcm
            .ok_or_else(|| Error::Config("mode n needs consistency network weights".into()))?;
        refine(
            &fused,
            d,
            &ScaledDcm {
                net: dcm,
                residual_scale: config.residual_scale,
            },
        )?
    } else {
        fused.clone()
    };
    Ok(FusionOutput {
        stage1: s1,
        fused,
        refined,
    })
}
