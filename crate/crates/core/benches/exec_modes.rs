use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gapsched::data::{extract_patches, ImageDataset};
use gapsched::learners::{monte_carlo_psnr, Identity};
use gapsched::{Exec, ImagePatch, Specification, SpeckleConfig};

fn ramp(w: usize, h: usize) -> ImagePatch {
    ImagePatch::new(w, h, (0..w * h).map(|i| (i % 251) as f64 / 250.0).collect()).unwrap()
}

fn bench_monte_carlo(c: &mut Criterion) {
    let patches: Vec<ImagePatch> = (0..16).map(|_| ramp(40, 40)).collect();
    let theta = Specification::new(0.1, 0.5, 64.0);
    let cfg = SpeckleConfig::default();
    let mut group = c.benchmark_group("monte_carlo_psnr");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| monte_carlo_psnr(&Identity, &theta, black_box(&patches), 8, &cfg, &[], 1, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_patches(c: &mut Criterion) {
    let ds = ImageDataset {
        images: vec![ramp(256, 256), ramp(200, 300)],
        paths: vec![Default::default(); 2],
        skipped: vec![],
    };
    let mut group = c.benchmark_group("extract_patches");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| extract_patches(black_box(&ds), 40, 2000, true, 7, &[], exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_monte_carlo, bench_patches);
criterion_main!(benches);
