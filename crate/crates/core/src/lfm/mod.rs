//! Layered fusion: a guided-filter first stage that merges the edge and
//! edge-highlighted depths, and a second stage that merges the result with
//! the original depth through either the fusion network or another guided
//! filter. Also pseudo-label generation and the training losses.

mod loss;
mod net;
mod train;

pub use loss::{loss_ilnr, loss_ranking, ranking_loss_and_grad, trimmed_stats, IlnrTarget, ILNR_TRIM};
pub use net::{FusionNet, FusionNetSpec};
pub use train::{
    load_lfm_dataset, train_lfm, write_lfm_dataset, LfmLossRecord, LfmSample, LfmTrainConfig, LfmTrainOutcome,
    RankDomain,
};

pub use crate::pairs::{sample_pairs, sample_pairs_edge_guided, PairSampling, PointPair};

use crate::error::{check_shape, Result};
use crate::guided::{guided_filter, GuidedFilterParams};
use crate::maps::{DepthMap, Raster};

/// Guided filter with the edge depth as guide and the edge-highlighted depth
/// as input.
pub fn fuse_stage1(d_edge: &DepthMap, d_edge_highlighted: &DepthMap, params: &GuidedFilterParams) -> Result<DepthMap> {
    guided_filter(d_edge, d_edge_highlighted, params)
}

#[derive(Debug, Clone, Copy)]
pub enum Stage2<'a> {
    Network(&'a FusionNet),
    /// Guide is the stage-1 result, input the original depth.
    GuidedFilter(GuidedFilterParams),
}

pub fn fuse_stage2(d_original: &DepthMap, d_stage1: &DepthMap, mode: Stage2<'_>) -> Result<DepthMap> {
    check_shape(d_original.dims(), d_stage1.dims())?;
    match mode {
        Stage2::Network(net) => net.fuse(d_original, d_stage1),
        Stage2::GuidedFilter(params) => guided_filter(d_stage1, d_original, &params),
    }
}

/// Training inputs `(lo, hi)` and the label `GF(guide = hi, input = lo)`.
pub fn make_pseudo_pair(
    depth_lo: &DepthMap,
    depth_hi: &DepthMap,
    params: &GuidedFilterParams,
) -> Result<((DepthMap, DepthMap), DepthMap)> {
    check_shape(depth_lo.dims(), depth_hi.dims())?;
    let label = guided_filter(depth_hi, depth_lo, params)?;
    Ok(((depth_lo.clone(), depth_hi.clone()), label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_map(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DepthMap::new(w, h, (0..w * h).map(|_| rng.random_range(0.5..4.0)).collect()).unwrap()
    }

    #[test]
    fn stage1_constant_and_self() {
        let g = rand_map(24, 24, 1);
        let params = GuidedFilterParams::for_width(24);
        let c = DepthMap::constant(24, 24, 1.75);
        assert!(fuse_stage1(&g, &c, &params).unwrap().data().iter().all(|&v| v == 1.75));
        let same = fuse_stage1(&g, &g, &params).unwrap();
        for (a, b) in same.data().iter().zip(g.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn stage2_guided_mode_is_compositional() {
        let a = rand_map(24, 24, 2);
        let b = rand_map(24, 24, 3);
        let params = GuidedFilterParams { radius: 2, eps: 1e-3 };
        let via = fuse_stage2(&a, &b, Stage2::GuidedFilter(params)).unwrap();
        assert_eq!(via, guided_filter(&b, &a, &params).unwrap());
        let c = DepthMap::constant(24, 24, 2.0);
        let out = fuse_stage2(&c, &b, Stage2::GuidedFilter(params)).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn pseudo_pair_cases() {
        let lo = rand_map(20, 20, 4);
        let params = GuidedFilterParams { radius: 2, eps: 1e-12 };
        let ((a, b), label) = make_pseudo_pair(&lo, &lo, &params).unwrap();
        assert_eq!((&a, &b), (&lo, &lo));
        for (x, y) in label.data().iter().zip(lo.data()) {
            assert!((x - y).abs() < 1e-3);
        }
        let c = DepthMap::constant(20, 20, 3.0);
        let (_, label) = make_pseudo_pair(&c, &lo, &params).unwrap();
        assert!(label.data().iter().all(|&v| v == 3.0));
        assert!(make_pseudo_pair(&c, &rand_map(19, 20, 1), &params).is_err());
    }
}
