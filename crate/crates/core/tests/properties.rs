mod oracles;

use mfrnet::pipeline::{aggregate_blocks, tile_frame};
use mfrnet::{bd_quality, bd_rate, psnr_luma, select_model, ChromaFormat, ConvParams, Frame, Plane, RdCurve, RdPoint, Tensor, TilePlan};
use proptest::prelude::*;

fn tensor(shape: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

/// Rates and qualities both strictly increasing.
fn curve() -> impl Strategy<Value = RdCurve> {
    (
        0.5f64..4.0,
        prop::array::uniform3(0.15f64..0.5),
        25.0f64..40.0,
        prop::array::uniform3(0.5f64..3.0),
    )
        .prop_map(|(r0, dr, q0, dq)| {
            let mut lr = r0;
            let mut q = q0;
            let mut pts = vec![RdPoint { rate: 10f64.powf(lr), quality: q }];
            for i in 0..3 {
                lr += dr[i];
                q += dq[i];
                pts.push(RdPoint { rate: 10f64.powf(lr), quality: q });
            }
            RdCurve::new(&pts).unwrap()
        })
}

/// A second curve close enough to overlap the first substantially.
fn curve_pair() -> impl Strategy<Value = (RdCurve, RdCurve)> {
    (curve(), prop::array::uniform4(-0.08f64..0.08), prop::array::uniform4(-0.3f64..0.3)).prop_filter_map(
        "perturbed curve must stay monotone",
        |(a, dr, dq)| {
            let pts: Vec<RdPoint> = a
                .points()
                .iter()
                .zip(dr.iter().zip(&dq))
                .map(|(p, (r, q))| RdPoint {
                    rate: p.rate * 10f64.powf(*r),
                    quality: p.quality + q,
                })
                .collect();
            RdCurve::new(&pts).ok().map(|b| (a, b))
        },
    )
}

fn shifted(c: &RdCurve, rate_factor: f64, dq: f64) -> RdCurve {
    let pts: Vec<RdPoint> = c
        .points()
        .iter()
        .map(|p| RdPoint {
            rate: p.rate * rate_factor,
            quality: p.quality + dq,
        })
        .collect();
    RdCurve::new(&pts).unwrap()
}

fn luma_frame(w: usize, h: usize, data: Vec<u16>) -> Frame {
    let (cw, ch) = ChromaFormat::Yuv420.chroma_size(w, h);
    let chroma = || Plane::filled(cw, ch, 128);
    Frame::new(8, ChromaFormat::Yuv420, [Plane::new(w, h, data).unwrap(), chroma(), chroma()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear_without_bias(
        x in values(2 * 7 * 6),
        y in values(2 * 7 * 6),
        w in values(3 * 2 * 3 * 3),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let p = ConvParams::new(tensor([3, 2, 3, 3], w), vec![0.0; 3]).unwrap();
        let (x, y) = (tensor([1, 2, 7, 6], x), tensor([1, 2, 7, 6], y));
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = mfrnet::ops::conv2d(&tensor([1, 2, 7, 6], mix), &p).unwrap();
        let (cx, cy) = (mfrnet::ops::conv2d(&x, &p).unwrap(), mfrnet::ops::conv2d(&y, &p).unwrap());
        let rhs: Vec<f64> = cx.data().iter().zip(cy.data()).map(|(a, b)| alpha * a + beta * b).collect();
        let scale = rhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for (a, b) in lhs.data().iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn conv_matches_direct_summation(
        x in values(3 * 5 * 8),
        w in values(2 * 3 * 3 * 3),
        b in values(2),
    ) {
        let p = ConvParams::new(tensor([2, 3, 3, 3], w), b).unwrap();
        let x = tensor([1, 3, 5, 8], x);
        let got = mfrnet::ops::conv2d(&x, &p).unwrap();
        let want = oracles::conv(&oracles::Map::from_tensor(&x), &p);
        prop_assert!(oracles::rel_err(got.data(), &want.v) < 1e-12);
    }

    #[test]
    fn every_pixel_is_covered(w in 1usize..400, h in 1usize..300) {
        let plan = TilePlan::new(w, h).unwrap();
        let cov = plan.coverage();
        prop_assert_eq!(cov.len(), w * h);
        prop_assert!(cov.iter().all(|&c| c >= 1));
        for &(x, y) in &plan.anchors {
            prop_assert!(x % 92 == 0 || x + 96 == w);
            prop_assert!(y % 92 == 0 || y + 96 == h);
        }
        // On a regular grid the overlap strips are covered by exactly two
        // blocks and their crossings by four.
        let regular = |d: usize| d <= 96 || (d - 96) % 92 == 0;
        if regular(w) && regular(h) {
            prop_assert!(cov.iter().all(|&c| [1, 2, 4].contains(&c)));
        }
    }

    #[test]
    fn tiling_round_trips(w in 1usize..260, h in 1usize..200, seed in any::<u64>()) {
        let data: Vec<f32> = (0..3 * w * h).map(|i| ((i as u64 ^ seed) % 1021) as f32 / 1020.0).collect();
        let t = Tensor::from_vec([1, 3, h, w], data).unwrap();
        let (plan, blocks) = tile_frame(&t).unwrap();
        prop_assert_eq!(blocks.len(), plan.len());
        let back = aggregate_blocks(&plan, &blocks).unwrap();
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn model_choice_is_monotone(a in 0.0f64..51.0, b in 0.0f64..51.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(select_model(lo).number() <= select_model(hi).number());
        let expected = 1 + [24.5, 29.5, 34.5].iter().filter(|&&t| a > t).count();
        prop_assert_eq!(select_model(a).number(), expected);
    }

    #[test]
    fn bd_matches_dense_oracle((a, b) in curve_pair()) {
        let rate = bd_rate(&a, &b).unwrap();
        prop_assert!((rate - oracles::bd_rate_dense(&a, &b)).abs() < 0.05);
        let quality = bd_quality(&a, &b).unwrap();
        prop_assert!((quality - oracles::bd_quality_dense(&a, &b)).abs() < 0.005);
    }

    #[test]
    fn bd_quality_is_antisymmetric((a, b) in curve_pair()) {
        let ab = bd_quality(&a, &b).unwrap();
        let ba = bd_quality(&b, &a).unwrap();
        prop_assert!((ab + ba).abs() < 1e-9);
    }

    #[test]
    fn cheaper_test_rates_lower_bd_rate(a in curve(), f in 0.5f64..0.99) {
        let base = bd_rate(&a, &a).unwrap();
        let cheaper = bd_rate(&a, &shifted(&a, f, 0.0)).unwrap();
        prop_assert!(cheaper < base);
        prop_assert!((cheaper - (f - 1.0) * 100.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_quality_shift_is_recovered(a in curve(), dq in -1.0f64..1.0) {
        prop_assert!((bd_quality(&a, &shifted(&a, 1.0, dq)).unwrap() - dq).abs() < 1e-9);
    }

    #[test]
    fn psnr_is_symmetric_and_shift_invariant(
        a in prop::collection::vec(0u16..200, 48),
        b in prop::collection::vec(0u16..200, 48),
        k in 0u16..55,
    ) {
        let (fa, fb) = (luma_frame(8, 6, a.clone()), luma_frame(8, 6, b.clone()));
        let ab = psnr_luma(&fa, &fb).unwrap();
        prop_assert_eq!(ab.to_bits(), psnr_luma(&fb, &fa).unwrap().to_bits());
        let up = |v: &[u16]| luma_frame(8, 6, v.iter().map(|s| s + k).collect());
        prop_assert_eq!(ab.to_bits(), psnr_luma(&up(&a), &up(&b)).unwrap().to_bits());
    }
}
