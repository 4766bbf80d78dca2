use lqsynth_core::degrade::{
    add_gaussian_noise, anisotropic_gaussian_kernel, apply, convolve2d_reflect, jpeg_roundtrip,
    resize, resize_to, sample_pipeline, DegradationRanges, DegradationSample, DegradeError,
    Kernel2D, PipelineKind, ResizeFilter, StageSpec,
};
use lqsynth_core::io::procedural_set;
use lqsynth_core::metrics::psnr;
use lqsynth_core::tensor::Rng;
use lqsynth_core::Image;
use proptest::prelude::*;

fn max_abs(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0.0, f64::max)
}

fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut rng = Rng::new(seed, 77);
    Image::from_fn(w, h, c, |_, _, _| rng.uniform() as f32)
}

// ---------- kernels ----------

#[test]
fn isotropic_kernel_ignores_rotation() {
    let base = anisotropic_gaussian_kernel(1.7, 1.7, 0.0, 9).unwrap();
    for theta in [0.3, 1.0, 2.2, 3.1] {
        let k = anisotropic_gaussian_kernel(1.7, 1.7, theta, 9).unwrap();
        for (a, b) in k.weights().iter().zip(base.weights()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn unit_sigma_center_weight_matches_formula() {
    let k = anisotropic_gaussian_kernel(1.0, 1.0, 0.0, 5).unwrap();
    let row: f64 = (-2i32..=2).map(|d| (-(d * d) as f64 / 2.0).exp()).sum();
    let center = 1.0 / (row * row);
    assert!((k.at(2, 2) - center).abs() < 1e-12);
    let corner = (-4.0f64).exp() / (row * row);
    assert!((k.at(0, 0) - corner).abs() < 1e-12);
}

#[test]
fn quarter_turn_transposes_kernel() {
    let k0 = anisotropic_gaussian_kernel(2.5, 0.8, 0.0, 11).unwrap();
    let k90 = anisotropic_gaussian_kernel(2.5, 0.8, std::f64::consts::FRAC_PI_2, 11).unwrap();
    for r in 0..11 {
        for c in 0..11 {
            assert!((k0.at(r, c) - k90.at(c, r)).abs() < 1e-12);
        }
    }
    // Wide along x at theta 0.
    assert!(k0.at(5, 8) > k0.at(8, 5));
}

#[test]
fn kernel_errors() {
    assert!(matches!(
        anisotropic_gaussian_kernel(1.0, 1.0, 0.0, 4),
        Err(DegradeError::EvenKernel(4))
    ));
    assert!(matches!(
        anisotropic_gaussian_kernel(0.0, 1.0, 0.0, 5),
        Err(DegradeError::NonPositiveSigma(..))
    ));
    assert!(anisotropic_gaussian_kernel(1.0, -2.0, 0.0, 5).is_err());
    assert!(anisotropic_gaussian_kernel(1.0, f64::NAN, 0.0, 5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_normalized_and_nonnegative(
        sx in 0.1f64..6.0, sy in 0.1f64..6.0, theta in 0.0f64..6.3, half in 0usize..11,
    ) {
        let k = anisotropic_gaussian_kernel(sx, sy, theta, 2 * half + 1).unwrap();
        let sum: f64 = k.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
    }
}

// ---------- convolution ----------

/// Mirror without repeating the edge sample, written independently of the library.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

#[test]
fn delta_kernel_is_identity() {
    let img = random_image(9, 7, 3, 1);
    let out = convolve2d_reflect(&img, &Kernel2D::delta(5).unwrap());
    assert_eq!(out, img);
}

#[test]
fn blur_keeps_constant_images() {
    let img = Image::filled(10, 6, 3, 0.42);
    let k = anisotropic_gaussian_kernel(2.0, 0.7, 0.4, 13).unwrap();
    let out = convolve2d_reflect(&img, &k);
    assert!(out.data().iter().all(|v| (v - 0.42).abs() < 1e-6));
}

#[test]
fn convolution_matches_loop_oracle() {
    let img = random_image(8, 8, 1, 2);
    let mut rng = Rng::new(3, 3);
    let weights: Vec<f64> = (0..9).map(|_| rng.uniform()).collect();
    let k = Kernel2D::new(3, weights).unwrap();
    let out = convolve2d_reflect(&img, &k);
    for y in 0..8isize {
        for x in 0..8isize {
            let mut acc = 0.0f64;
            for i in 0..3isize {
                for j in 0..3isize {
                    let sy = mirror(y - (i - 1), 8);
                    let sx = mirror(x - (j - 1), 8);
                    acc += k.at(i as usize, j as usize) * img.get(0, sy, sx) as f64;
                }
            }
            assert!((out.get(0, y as usize, x as usize) as f64 - acc).abs() < 1e-6);
        }
    }
}

#[test]
fn kernel_larger_than_image_still_reflects() {
    let img = random_image(3, 2, 1, 4);
    let k = anisotropic_gaussian_kernel(3.0, 3.0, 0.0, 15).unwrap();
    let out = convolve2d_reflect(&img, &k);
    assert_eq!(out.size(), (3, 2));
    assert!(out.data().iter().all(|v| v.is_finite()));
}

// ---------- resize ----------

#[test]
fn bicubic_scale_one_is_identity() {
    let img = random_image(13, 9, 3, 5);
    let out = resize(&img, 1.0, ResizeFilter::Bicubic).unwrap();
    assert!(max_abs(&out, &img) < 1e-6);
}

#[test]
fn area_halving_averages_pairs() {
    let ramp = Image::from_fn(8, 1, 1, |_, _, x| x as f32 / 10.0);
    let out = resize_to(&ramp, 4, 1, ResizeFilter::Area).unwrap();
    for i in 0..4 {
        let want = (ramp.get(0, 0, 2 * i) + ramp.get(0, 0, 2 * i + 1)) / 2.0;
        assert!((out.get(0, 0, i) - want).abs() < 1e-6);
    }
    // Same in 2-D via the scale entry point.
    let img = random_image(6, 4, 2, 6);
    let half = resize(&img, 0.5, ResizeFilter::Area).unwrap();
    assert_eq!(half.size(), (3, 2));
    for c in 0..2 {
        for y in 0..2 {
            for x in 0..3 {
                let want = (img.get(c, 2 * y, 2 * x)
                    + img.get(c, 2 * y, 2 * x + 1)
                    + img.get(c, 2 * y + 1, 2 * x)
                    + img.get(c, 2 * y + 1, 2 * x + 1))
                    / 4.0;
                assert!((half.get(c, y, x) - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn output_size_rounds() {
    let img = Image::filled(10, 7, 1, 0.5);
    assert_eq!(resize(&img, 0.25, ResizeFilter::Bilinear).unwrap().size(), (3, 2));
    assert_eq!(resize(&img, 0.01, ResizeFilter::Nearest).unwrap().size(), (1, 1));
    assert_eq!(resize(&img, 1.5, ResizeFilter::Bicubic).unwrap().size(), (15, 11));
}

#[test]
fn resize_errors() {
    let img = Image::filled(4, 4, 1, 0.5);
    assert!(matches!(resize(&img, 0.0, ResizeFilter::Area), Err(DegradeError::InvalidScale(_))));
    assert!(resize(&img, -1.0, ResizeFilter::Area).is_err());
    assert!(resize(&img, f64::INFINITY, ResizeFilter::Area).is_err());
    assert!(matches!(
        resize_to(&img, 0, 3, ResizeFilter::Area),
        Err(DegradeError::DegenerateSize { .. })
    ));
}

#[test]
fn nearest_upsample_replicates() {
    let img = random_image(3, 2, 1, 7);
    let up = resize(&img, 2.0, ResizeFilter::Nearest).unwrap();
    for y in 0..4 {
        for x in 0..6 {
            assert_eq!(up.get(0, y, x), img.get(0, y / 2, x / 2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resize_preserves_constants(
        v in 0.0f32..1.0, scale in 0.1f64..3.0, f in 0usize..4, w in 1usize..20, h in 1usize..20,
    ) {
        let img = Image::filled(w, h, 2, v);
        let out = resize(&img, scale, ResizeFilter::ALL[f]).unwrap();
        prop_assert!(out.data().iter().all(|x| (x - v).abs() < 1e-5));
    }
}

// ---------- noise ----------

#[test]
fn zero_sigma_noise_is_identity() {
    let img = random_image(5, 5, 3, 8);
    let out = add_gaussian_noise(&img, 0.0, false, &mut Rng::new(1, 1)).unwrap();
    assert_eq!(out, img);
}

#[test]
fn noise_std_matches_sigma() {
    let img = Image::filled(1000, 1000, 1, 0.5);
    let out = add_gaussian_noise(&img, 0.1, false, &mut Rng::new(2, 2)).unwrap();
    let n = out.data().len() as f64;
    let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = out.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var.sqrt() - 0.1).abs() / 0.1 < 0.02, "std {}", var.sqrt());
}

#[test]
fn noise_output_is_clamped() {
    let img = Image::filled(64, 64, 3, 0.98);
    let out = add_gaussian_noise(&img, 0.5, true, &mut Rng::new(3, 3)).unwrap();
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

// ---------- jpeg ----------

#[test]
fn jpeg_q100_is_near_lossless_on_gray() {
    let src = &procedural_set(1, 32, 32, 11)[0];
    let luma: Vec<f32> = src.luma().iter().map(|&v| v as f32).collect();
    let gray1 = Image::from_planar(32, 32, 1, luma.clone());
    let out = jpeg_roundtrip(&gray1, 100).unwrap();
    assert!(max_abs(&out, &gray1) <= 4.0 / 255.0);
    let gray3 = Image::from_planar(32, 32, 3, [luma.clone(), luma.clone(), luma].concat());
    let out = jpeg_roundtrip(&gray3, 100).unwrap();
    assert!(max_abs(&out, &gray3) <= 4.0 / 255.0);
}

#[test]
fn jpeg_constant_stays_flat() {
    for q in [1, 10, 30, 50, 75, 100] {
        let img = Image::from_fn(20, 12, 3, |c, _, _| [0.2, 0.55, 0.8][c]);
        let out = jpeg_roundtrip(&img, q).unwrap();
        for c in 0..3 {
            let p = out.plane(c);
            let (lo, hi) = p.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(hi - lo <= 1.0 / 255.0 + 1e-6, "q={q} spread {}", hi - lo);
        }
    }
    for q in [50, 75, 100] {
        let img = Image::filled(16, 16, 1, 0.37);
        let out = jpeg_roundtrip(&img, q).unwrap();
        assert!(max_abs(&out, &img) <= 1.0 / 255.0 + 1e-6, "q={q}");
    }
}

#[test]
fn jpeg_fidelity_falls_with_quality() {
    let img = &procedural_set(1, 64, 64, 12)[0];
    let scores: Vec<f64> = [90, 70, 50, 30]
        .iter()
        .map(|&q| psnr(img, &jpeg_roundtrip(img, q).unwrap()).unwrap())
        .collect();
    for w in scores.windows(2) {
        assert!(w[1] <= w[0], "{scores:?}");
    }
}

#[test]
fn jpeg_rejects_bad_input() {
    let img = Image::filled(8, 8, 3, 0.5);
    assert!(matches!(jpeg_roundtrip(&img, 0), Err(DegradeError::InvalidQuality(0))));
    assert!(jpeg_roundtrip(&img, 101).is_err());
    let two = Image::filled(8, 8, 2, 0.5);
    assert!(matches!(jpeg_roundtrip(&two, 80), Err(DegradeError::UnsupportedChannels(2))));
}

#[test]
fn jpeg_handles_unaligned_sizes() {
    let img = random_image(13, 9, 3, 13);
    let out = jpeg_roundtrip(&img, 85).unwrap();
    assert_eq!(out.size(), (13, 9));
}

// ---------- pipelines ----------

const HQ: [usize; 2] = [64, 64];
const LQ: [usize; 2] = [32, 32];

#[test]
fn bicubic_pipeline_is_one_resize() {
    let s = sample_pipeline(PipelineKind::Bicubic, &mut Rng::new(1, 0), &DegradationRanges::default(), HQ, LQ).unwrap();
    assert_eq!(s.stages.len(), 1);
    assert!(matches!(
        s.stages[0],
        StageSpec::Resize { filter: ResizeFilter::Bicubic, .. }
    ));
}

#[test]
fn classical_stage_order() {
    let s = sample_pipeline(PipelineKind::Classical, &mut Rng::new(2, 0), &DegradationRanges::default(), HQ, LQ).unwrap();
    let ops: Vec<_> = s.stages.iter().map(|s| s.op_name()).collect();
    assert_eq!(ops, ["blur", "resize", "gaussian_noise", "jpeg"]);
}

fn shuffle_order(seed: u64) -> Vec<&'static str> {
    let s = sample_pipeline(PipelineKind::Shuffle, &mut Rng::new(seed, 0), &DegradationRanges::default(), HQ, LQ).unwrap();
    s.stages.iter().map(|s| s.op_name()).collect()
}

#[test]
fn shuffle_is_a_reproducible_permutation() {
    let a = shuffle_order(42);
    assert_eq!(a, shuffle_order(42));
    assert_eq!(a.len(), 4);
    assert_eq!(a[3], "jpeg");
    let mut core = a[..3].to_vec();
    core.sort();
    assert_eq!(core, ["blur", "gaussian_noise", "resize"]);
}

#[test]
fn shuffle_orderings_are_uniform() {
    let mut rng = Rng::new(5, 0);
    let ranges = DegradationRanges::default();
    let mut counts = std::collections::BTreeMap::new();
    let n = 10_000;
    for _ in 0..n {
        let s = sample_pipeline(PipelineKind::Shuffle, &mut rng, &ranges, HQ, LQ).unwrap();
        let key: Vec<_> = s.stages[..3].iter().map(|s| s.op_name()).collect();
        *counts.entry(key).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 6);
    for &c in counts.values() {
        assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn empty_pipeline_is_identity() {
    let img = random_image(7, 5, 3, 9);
    let s = DegradationSample {
        kind: PipelineKind::Classical,
        stages: vec![],
        seed: 3,
        target: [7, 5],
    };
    assert_eq!(apply(&img, &s).unwrap(), img);
}

#[test]
fn applying_a_sample_is_bit_reproducible() {
    let img = &procedural_set(1, 64, 64, 3)[0];
    for kind in PipelineKind::ALL {
        let s = sample_pipeline(kind, &mut Rng::new(8, 0), &DegradationRanges::default(), HQ, LQ).unwrap();
        let a = apply(img, &s).unwrap();
        let b = apply(img, &s).unwrap();
        let bits = |i: &Image| i.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{kind}");
        // Also after a serialization round trip.
        let back: DegradationSample = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(bits(&apply(img, &back).unwrap()), bits(&a), "{kind}");
    }
}

#[test]
fn mild_classical_sample_is_near_identity() {
    let img = &procedural_set(1, 32, 32, 4)[0];
    let s = DegradationSample {
        kind: PipelineKind::Classical,
        stages: vec![
            StageSpec::Blur { sigma_x: 1e-3, sigma_y: 1e-3, theta: 0.0, size: 7 },
            StageSpec::Resize { scale: 1.0, filter: ResizeFilter::Bicubic, size: None },
            StageSpec::GaussianNoise { sigma: 0.0, gray: false },
            StageSpec::Jpeg { quality: 100 },
        ],
        seed: 1,
        target: [32, 32],
    };
    let out = apply(img, &s).unwrap();
    assert!(max_abs(&out, img) <= 4.0 / 255.0, "max err {}", max_abs(&out, img));
}

#[test]
fn wrong_target_is_reported() {
    let img = random_image(8, 8, 3, 1);
    let s = DegradationSample {
        kind: PipelineKind::Bicubic,
        stages: vec![StageSpec::Resize { scale: 0.5, filter: ResizeFilter::Bicubic, size: None }],
        seed: 0,
        target: [3, 3],
    };
    assert!(matches!(apply(&img, &s), Err(DegradeError::TargetMismatch { .. })));
}

#[test]
fn invalid_ranges_are_rejected_by_sampler() {
    let r = DegradationRanges { noise_sigma: [0.2, 0.1], ..Default::default() };
    assert!(sample_pipeline(PipelineKind::Classical, &mut Rng::new(0, 0), &r, HQ, LQ).is_err());
}

#[test]
fn high_order_degrades_at_least_as_much_as_classical() {
    let images = procedural_set(100, 64, 64, 21);
    let ranges = DegradationRanges::default();
    let mut totals = [0.0; 2];
    for (i, img) in images.iter().enumerate() {
        let reference = resize_to(img, 32, 32, ResizeFilter::Bicubic).unwrap();
        let draw = |kind| sample_pipeline(kind, &mut Rng::derive(99, &[i as u64]), &ranges, HQ, LQ).unwrap();
        let (one, two) = (draw(PipelineKind::Classical), draw(PipelineKind::HighOrder));
        // Same parameters for the shared first round.
        assert_eq!(one.stages[..], two.stages[..4]);
        totals[0] += psnr(&reference, &apply(img, &one).unwrap()).unwrap();
        totals[1] += psnr(&reference, &apply(img, &two).unwrap()).unwrap();
    }
    let [classical, high] = totals.map(|t| t / images.len() as f64);
    assert!(high <= classical, "high-order {high:.2} dB vs classical {classical:.2} dB");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_outputs_are_valid(seed in any::<u64>(), k in 0usize..4, tw in 8usize..24, th in 8usize..24) {
        let img = procedural_set(1, 40, 36, seed)[0].clone();
        let kind = PipelineKind::ALL[k];
        let s = sample_pipeline(kind, &mut Rng::new(seed, 1), &DegradationRanges::default(), [40, 36], [tw, th]).unwrap();
        let out = apply(&img, &s).unwrap();
        prop_assert_eq!(out.size(), (tw, th));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
