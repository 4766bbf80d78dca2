use criterion::{criterion_group, criterion_main, Criterion};
use lqsynth_bench::toy_model;
use lqsynth_core::degrade::{apply, jpeg_roundtrip, resize_to, sample_pipeline, DegradationRanges, PipelineKind, ResizeFilter};
use lqsynth_core::diffusion::{train_step, DiffusionConfig, NoisePredictor};
use lqsynth_core::io::procedural_set;
use lqsynth_core::metrics::{extract_features, fit_stats, frechet_distance, PatchStats};
use lqsynth_core::synth::diffuse_and_denoise;
use lqsynth_core::tensor::{randn, Adam, AdamConfig, Dims, Rng, Tensor};
use lqsynth_core::Image;
use std::hint::black_box;

fn degradations(c: &mut Criterion) {
    let img = procedural_set(1, 128, 128, 3).remove(0);
    c.bench_function("jpeg_q50_128px", |b| b.iter(|| jpeg_roundtrip(black_box(&img), 50).unwrap()));
    c.bench_function("bicubic_128_to_32", |b| {
        b.iter(|| resize_to(black_box(&img), 32, 32, ResizeFilter::Bicubic).unwrap())
    });
    let ranges = DegradationRanges::default();
    for kind in [PipelineKind::Classical, PipelineKind::HighOrder] {
        let sample = sample_pipeline(kind, &mut Rng::new(4, 0), &ranges, [128, 128], [32, 32]).unwrap();
        c.bench_function(&format!("pipeline_{}_128_to_32", kind.name()), |b| {
            b.iter(|| apply(black_box(&img), &sample).unwrap())
        });
    }
}

fn model(c: &mut Criterion) {
    let mut m = toy_model(0);
    let sched = DiffusionConfig::default().schedule().unwrap();
    let mut rng = Rng::new(5, 0);
    let x: Tensor = randn(&mut rng, Dims::new(8, 3, 32, 32));
    c.bench_function("unet_forward_8x32px", |b| {
        b.iter(|| m.predict_eps(black_box(&x), &[100; 8]).unwrap())
    });
    let mut adam = Adam::new(AdamConfig::default());
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("train_step_batch8_32px", |b| {
        b.iter(|| train_step(&mut m, &mut adam, &x, &mut rng, &sched, 0.995).unwrap())
    });
    g.finish();
    let img = procedural_set(1, 32, 32, 6).remove(0);
    let mut g = c.benchmark_group("synthesis");
    g.sample_size(10);
    g.bench_function("diffuse_and_denoise_t50_32px", |b| {
        b.iter(|| diffuse_and_denoise(black_box(&img), 50, &m, &sched, 1, 0, false).unwrap())
    });
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let imgs: Vec<Image> = procedural_set(64, 32, 32, 7);
    let ex = PatchStats::default();
    let a = fit_stats(&extract_features(&imgs[..32], &ex).unwrap()).unwrap();
    let b2 = fit_stats(&extract_features(&imgs[32..], &ex).unwrap()).unwrap();
    c.bench_function("patch_features_64x32px", |b| b.iter(|| extract_features(black_box(&imgs), &ex).unwrap()));
    c.bench_function("frechet_26d", |b| b.iter(|| frechet_distance(black_box(&a), &b2).unwrap()));
}

criterion_group!(benches, degradations, model, metrics);
criterion_main!(benches);
