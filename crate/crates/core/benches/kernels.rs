use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lgmc_core::attention::{efficient_cross_attention_with, vanilla_cross_attention_with, AttentionInputs};
use lgmc_core::motion::{bilinear_warp_displacement, block_match_with};
use lgmc_core::nn::{seeded_rng, Conv2d};
use lgmc_core::tensor::matmul_with;
use lgmc_core::{Exec, Tensor};
use rand::Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random(dims: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = seeded_rng(seed);
    Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0)).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [128, 256] {
        let (a, b) = (random(&[n, n], 1), random(&[n, n], 2));
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |bench, _| {
                bench.iter(|| black_box(matmul_with(&a, &b, exec).unwrap()))
            });
        }
    }
    g.finish();
}

fn attention(c: &mut Criterion) {
    let mut g = c.benchmark_group("attention");
    g.sample_size(20);
    for l in [1024, 4096] {
        let inp = AttentionInputs::new(random(&[l, 64], 3), random(&[l, 64], 4)).unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(format!("efficient/{name}"), l), &l, |bench, _| {
                bench.iter(|| black_box(efficient_cross_attention_with(&inp, exec).unwrap()))
            });
            if l <= 1024 {
                g.bench_with_input(BenchmarkId::new(format!("vanilla/{name}"), l), &l, |bench, _| {
                    bench.iter(|| black_box(vanilla_cross_attention_with(&inp, exec).unwrap()))
                });
            }
        }
    }
    g.finish();
}

fn warp(c: &mut Criterion) {
    let mut g = c.benchmark_group("warp");
    let (h, w) = (128, 128);
    let feature = random(&[32, h, w], 5);
    let mut rng = seeded_rng(6);
    let disp = Tensor::from_fn(&[h, w, 2], |_| rng.gen_range(-6.0f32..6.0)).unwrap();
    for (name, exec) in MODES {
        g.bench_function(name, |bench| {
            bench.iter(|| black_box(bilinear_warp_displacement(&feature, &disp, exec).unwrap()))
        });
    }
    g.finish();
}

fn block_matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("block_match");
    g.sample_size(20);
    let reference = random(&[1, 128, 128], 7);
    let current = random(&[1, 128, 128], 8);
    for (name, exec) in MODES {
        g.bench_function(name, |bench| {
            bench.iter(|| black_box(block_match_with(&reference, &current, 8, 4, exec).unwrap()))
        });
    }
    g.finish();
}

fn convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv3x3");
    let conv = Conv2d::<f32>::seeded(64, 64, 3, 1, 9);
    let x = random(&[64, 64, 64], 10);
    for (name, exec) in MODES {
        g.bench_function(name, |bench| bench.iter(|| black_box(conv.forward_with(&x, exec).unwrap())));
    }
    g.finish();
}

criterion_group!(kernels, matmul, attention, warp, block_matching, convolution);
criterion_main!(kernels);
