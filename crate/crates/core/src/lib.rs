//! Edge-aware refinement of monocular depth maps.
//!
//! The crate covers the full data path from an RGB image and externally
//! estimated depth maps to a refined depth map: map containers and codecs,
//! hybrid edge detection, guided-filter and network fusion, residual
//! consistency refinement, optical flow, and evaluation metrics.

pub mod colormap;
pub mod dcm;
pub mod degrade;
pub mod edges;
pub mod error;
pub mod flow;
pub mod guided;
pub mod io;
pub mod lfm;
pub mod maps;
pub mod metrics;
pub mod nn;
pub mod pairs;
pub mod pipeline;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
pub use maps::{BinaryMask, DepthMap, EdgeMap, FlowField, Image, Raster};
