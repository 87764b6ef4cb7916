//! Property tests over the public API.

use depthfuse::dcm::{
    consistency_loss, loss_ssi_trim, occlusion_weights_f64, refine, DcmNet, DcmNetSpec, ScaleGroup, ScaledDcm,
};
use depthfuse::degrade::{degrade, Degradation};
use depthfuse::edges::{hybrid_fuse, HybridEdgeConfig};
use depthfuse::flow::warp_backward;
use depthfuse::guided::{box_filter, guided_filter, GuidedFilterParams};
use depthfuse::io::{decode_flo, encode_flo, load_image, save_image};
use depthfuse::lfm::{fuse_stage2, Stage2};
use depthfuse::metrics::{compute_metrics, OrdConfig};
use depthfuse::pairs::{sample_pairs, PairSampling};
use depthfuse::{BinaryMask, DepthMap, EdgeMap, FlowField, Image, Raster};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_map(r: &mut ChaCha8Rng, w: usize, h: usize, lo: f32, hi: f32) -> DepthMap {
    DepthMap::from_fn(w, h, |_, _| r.random_range(lo..hi))
}

fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| r.random_bool(0.3)).collect()).unwrap()
}

fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _| [r.random(), r.random(), r.random()])
}

/// A piecewise-smooth map: two planes split by a random vertical step.
fn scene_like(r: &mut ChaCha8Rng, w: usize, h: usize) -> DepthMap {
    let split = r.random_range(w / 4..3 * w / 4);
    let (a, b) = (r.random_range(0.5..1.5f32), r.random_range(1.5..3.0f32));
    let (sx, sy) = (r.random_range(-0.02..0.02f32), r.random_range(-0.02..0.02f32));
    DepthMap::from_fn(w, h, |x, y| if x < split { a } else { b } + sx * x as f32 + sy * y as f32)
}

fn pixel_metrics(pred: &DepthMap, gt: &DepthMap, e: &BinaryMask, c: &BinaryMask, align: bool) -> Vec<f64> {
    let r = compute_metrics(pred, gt, e, c, &OrdConfig { pair_count: 50, ..OrdConfig::default() }, align).unwrap();
    r.values()[..6].iter().map(|v| v.unwrap_or(f64::NAN)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn guided_filter_is_linear_in_input(seed in any::<u64>(), alpha in -2.0f32..2.0, beta in -2.0f32..2.0) {
        let mut r = rng(seed);
        let g = random_map(&mut r, 20, 16, 0.0, 1.0);
        let p = random_map(&mut r, 20, 16, 0.0, 1.0);
        let q = random_map(&mut r, 20, 16, 0.0, 1.0);
        let params = GuidedFilterParams { radius: 2, eps: 1e-3 };
        let mix = p.zip_map(&q, |a, b| alpha * a + beta * b).unwrap();
        let lhs = guided_filter(&g, &mix, &params).unwrap();
        let fp = guided_filter(&g, &p, &params).unwrap();
        let fq = guided_filter(&g, &q, &params).unwrap();
        for i in 0..lhs.pixel_count() {
            let rhs = alpha as f64 * fp.data()[i] as f64 + beta as f64 * fq.data()[i] as f64;
            prop_assert!((lhs.data()[i] as f64 - rhs).abs() <= 1e-6, "{} vs {}", lhs.data()[i], rhs);
        }
    }

    #[test]
    fn guided_filter_overshoot_is_bounded(seed in any::<u64>(), radius in 1usize..6) {
        let mut r = rng(seed);
        let g = scene_like(&mut r, 32, 24);
        let p = scene_like(&mut r, 32, 24);
        let (lo, hi) = p.min_max().unwrap();
        let delta = 0.05 * (hi - lo);
        let q = guided_filter(&g, &p, &GuidedFilterParams { radius, eps: 1e-3 }).unwrap();
        prop_assert!(q.data().iter().all(|&v| v >= lo - delta && v <= hi + delta));
    }

    #[test]
    fn box_filter_matches_window_means(seed in any::<u64>(), radius in 0usize..5) {
        let mut r = rng(seed);
        let m = random_map(&mut r, 13, 9, -1.0, 1.0);
        let b = box_filter(&m, radius);
        for y in 0..9usize {
            for x in 0..13usize {
                let (mut s, mut n) = (0.0f64, 0.0);
                for yy in y.saturating_sub(radius)..(y + radius + 1).min(9) {
                    for xx in x.saturating_sub(radius)..(x + radius + 1).min(13) {
                        s += m.at(xx, yy) as f64;
                        n += 1.0;
                    }
                }
                prop_assert!((b.at(x, y) as f64 - s / n).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stage2_guided_mode_is_the_guided_filter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_map(&mut r, 24, 18, 0.5, 2.0);
        let s = random_map(&mut r, 24, 18, 0.5, 2.0);
        let gf = GuidedFilterParams::for_width(24);
        prop_assert_eq!(fuse_stage2(&d, &s, Stage2::GuidedFilter(gf)).unwrap(), guided_filter(&s, &d, &gf).unwrap());
    }

    #[test]
    fn hybrid_square_root_lifts_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = 16 * 16;
        let a: Vec<f32> = (0..n).map(|_| r.random_range(0.001..0.999)).collect();
        let b: Vec<f32> = (0..n).map(|_| r.random_range(0.001..0.999)).collect();
        let out = hybrid_fuse(
            &EdgeMap::new(16, 16, a.clone()).unwrap(),
            &EdgeMap::new(16, 16, b.clone()).unwrap(),
            &HybridEdgeConfig::default(),
        ).unwrap();
        for i in 0..n {
            prop_assert!(out.data()[i] >= a[i] * b[i]);
        }
    }

    #[test]
    fn pair_sampling_is_reproducible(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt = random_map(&mut r, 20, 20, 0.5, 2.0);
        let mask = random_mask(&mut r, 20, 20);
        let cfg = PairSampling { count: 100, seed, ..PairSampling::default() };
        prop_assert_eq!(sample_pairs(&gt, &mask, &cfg).unwrap(), sample_pairs(&gt, &mask, &cfg).unwrap());
    }

    #[test]
    fn refinement_is_additive_and_bounded(seed in 0u64..1000, scale in 0.01f32..1.0) {
        let spec = DcmNetSpec { base_channels: 4, res_blocks: 1, ..DcmNetSpec::default() };
        let mut params = DcmNet::init(spec, seed).unwrap().into_params();
        let mut r = rng(seed);
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v += r.random_range(-3.0..3.0);
            }
        }
        let net = DcmNet::from_params(spec, params).unwrap();
        let d = random_map(&mut r, 20, 12, 0.5, 3.0);
        let o = random_map(&mut r, 20, 12, 0.5, 3.0);
        let out = refine(&d, &o, &ScaledDcm { net: &net, residual_scale: scale }).unwrap();
        let res = net.residual(&d, &o, scale).unwrap();
        for i in 0..d.pixel_count() {
            prop_assert_eq!(out.data()[i].to_bits(), (d.data()[i] + res.data()[i]).to_bits());
            prop_assert!((out.data()[i] as f64 - d.data()[i] as f64).abs() <= scale as f64);
        }
    }

    #[test]
    fn consistency_loss_vanishes_only_for_equal_depths(seed in any::<u64>(), pixel in 0usize..80, bump in 0.01f32..1.0) {
        let mut r = rng(seed);
        let d = random_map(&mut r, 10, 8, 0.5, 2.0);
        let same = ScaleGroup::new(vec![d.clone(); 5]).unwrap().with_zero_flows();
        prop_assert_eq!(consistency_loss(&same, 50.0).unwrap(), 0.0);
        let mut data = d.data().to_vec();
        data[pixel] += bump;
        let mut depths = vec![d; 5];
        depths[r.random_range(0..5)] = DepthMap::new(10, 8, data).unwrap();
        let changed = ScaleGroup::new(depths).unwrap().with_zero_flows();
        prop_assert!(consistency_loss(&changed, 50.0).unwrap() > 0.0);
    }

    #[test]
    fn occlusion_weights_are_one_on_matches_and_decay(seed in any::<u64>(), delta in 0.01f64..0.5) {
        let mut r = rng(seed);
        let a = random_image(&mut r, 12, 10);
        let b = random_image(&mut r, 12, 10);
        prop_assert!(occlusion_weights_f64(&a, &a, 50.0).unwrap().iter().all(|&w| w == 1.0));
        let w = occlusion_weights_f64(&a, &b, 50.0).unwrap();
        for (i, (pa, pb)) in a.data().chunks(3).zip(b.data().chunks(3)).enumerate() {
            let norm = pa.iter().zip(pb).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!(w[i] > 0.0 && w[i] <= 1.0);
            if norm > delta {
                prop_assert!(w[i] < (-50.0 * delta * delta).exp());
            }
        }
    }

    #[test]
    fn ssi_loss_of_a_map_with_itself_is_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_map(&mut r, 14, 11, 0.1, 5.0);
        prop_assert!(loss_ssi_trim(&p, &p, 0.2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_flow_warp_is_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_map(&mut r, 15, 7, -3.0, 3.0);
        let img = random_image(&mut r, 15, 7);
        let zero = FlowField::zeros(15, 7);
        prop_assert_eq!(warp_backward(&m, &zero).unwrap(), m);
        prop_assert_eq!(warp_backward(&img, &zero).unwrap(), img);
    }

    #[test]
    fn degradation_is_reproducible(seed in any::<u64>(), sigma in 0.0f32..2.0) {
        let img = random_image(&mut rng(seed), 16, 12);
        for kind in [Degradation::GaussianNoise, Degradation::GaussianBlur] {
            prop_assert_eq!(degrade(&img, kind, sigma, seed).unwrap(), degrade(&img, kind, sigma, seed).unwrap());
        }
    }

    #[test]
    fn flo_round_trip_is_bit_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = FlowField::new(9, 5, (0..45).map(|_| [r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)]).collect()).unwrap();
        prop_assert_eq!(decode_flo(&encode_flo(&f)).unwrap(), f);
    }

    #[test]
    fn png_round_trip_within_half_a_step(seed in any::<u64>()) {
        let img = random_image(&mut rng(seed), 11, 7);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        save_image(&p, &img).unwrap();
        let back = load_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn pixel_metrics_are_permutation_invariant(seed in any::<u64>(), align in any::<bool>()) {
        let mut r = rng(seed);
        let (w, h) = (12, 10);
        let gt = random_map(&mut r, w, h, 0.5, 2.0);
        let pred = random_map(&mut r, w, h, 0.4, 2.2);
        let e = random_mask(&mut r, w, h);
        let c = random_mask(&mut r, w, h);
        let mut perm: Vec<usize> = (0..w * h).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let pm = |m: &DepthMap| DepthMap::new(w, h, perm.iter().map(|&i| m.data()[i]).collect()).unwrap();
        let pb = |m: &BinaryMask| BinaryMask::new(w, h, perm.iter().map(|&i| m.data()[i]).collect()).unwrap();
        let a = pixel_metrics(&pred, &gt, &e, &c, align);
        let b = pixel_metrics(&pm(&pred), &pm(&gt), &pb(&e), &pb(&c), align);
        prop_assert!(close(&a, &b, 1e-12), "{a:?} vs {b:?}");
    }

    #[test]
    fn aligned_metrics_ignore_positive_affine_maps(seed in any::<u64>(), ks in 4u32..64, kt in -64i32..64) {
        let mut r = rng(seed);
        let gt = random_map(&mut r, 12, 12, 0.5, 2.0);
        // dyadic predictions, scales and shifts keep s·pred + t exact
        let pred = DepthMap::from_fn(12, 12, |_, _| r.random_range(0..1024) as f32 / 256.0);
        let e = random_mask(&mut r, 12, 12);
        let c = random_mask(&mut r, 12, 12);
        let (s, t) = (ks as f32 / 16.0, kt as f32 / 64.0);
        let moved = pred.map(|v| s * v + t);
        let a = pixel_metrics(&pred, &gt, &e, &c, true);
        let b = pixel_metrics(&moved, &gt, &e, &c, true);
        prop_assert!(close(&a, &b, 1e-9), "{a:?} vs {b:?}");
    }

    #[test]
    fn full_mask_esr_is_sqrel(seed in any::<u64>(), align in any::<bool>()) {
        let mut r = rng(seed);
        let gt = random_map(&mut r, 10, 10, 0.5, 2.0);
        let pred = random_map(&mut r, 10, 10, 0.5, 2.0);
        let full = BinaryMask::full(10, 10);
        let rep = compute_metrics(&pred, &gt, &full, &full, &OrdConfig::default(), align).unwrap();
        prop_assert_eq!(rep.esr, rep.sqrel);
    }

    #[test]
    fn ord_is_zero_for_monotone_transforms(seed in any::<u64>(), power in 0.5f64..3.0) {
        let mut r = rng(seed);
        // levels 1.1 apart in ratio exceed the 1.03 band before and after the transform
        let gt = DepthMap::from_fn(12, 12, |_, _| 1.1f32.powi(r.random_range(0..12)));
        let pred = gt.map(|v| (v as f64).powf(power) as f32);
        let e = random_mask(&mut r, 12, 12);
        let rep = compute_metrics(&pred, &gt, &e, &e, &OrdConfig { pair_count: 300, seed, ..OrdConfig::default() }, false).unwrap();
        prop_assert_eq!(rep.ord, Some(0.0));
    }

    #[test]
    fn delta1_falls_as_prediction_drifts(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt = random_map(&mut r, 12, 12, 0.5, 2.0);
        let dir: Vec<f32> = (0..144).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let full = BinaryMask::full(12, 12);
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let amount = 0.05 * k as f32;
            let pred = DepthMap::new(12, 12, gt.data().iter().zip(&dir).map(|(g, d)| g * (1.0 + amount).powf(*d)).collect()).unwrap();
            let d1 = compute_metrics(&pred, &gt, &full, &full, &OrdConfig::default(), false).unwrap().delta1.unwrap();
            prop_assert!(d1 <= last);
            last = d1;
        }
    }
}
