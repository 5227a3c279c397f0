use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use facepipe::eval::{eer, far_frr_curve};
use facepipe::gabor::{convolve, default_bank};
use facepipe::subspace::fit;
use facepipe::svm::{train, SvmParams};
use facepipe::{FeatureExtractor, FitParams, GaborBankConfig, Image, KernelSpec, LabeledDataset, ScoreSet, TrainSet};

fn noise_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn bench_gabor(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = GaborBankConfig {
        frequencies: 3,
        orientations: 8,
        ..GaborBankConfig::default()
    };
    let bank = default_bank(&config).unwrap();
    let img = noise_image(&mut rng, 100, 110);

    let mut group = c.benchmark_group("gabor");
    group.sample_size(20);
    for kernel in bank.kernels().iter().step_by(config.orientations) {
        group.bench_with_input(BenchmarkId::new("convolve", kernel.width()), kernel, |b, k| {
            b.iter(|| convolve(black_box(&img), k).unwrap())
        });
    }
    let extractor = FeatureExtractor::new(bank, 4, img.width(), img.height()).unwrap();
    group.bench_function("extract_24_filters", |b| {
        b.iter(|| extractor.extract(black_box(&img)).unwrap())
    });
    group.finish();
}

fn svm_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> TrainSet {
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        points.push((0..dim).map(|_| 0.8 * y + gaussian(rng)).collect());
        labels.push(y);
    }
    TrainSet::new(points, labels).unwrap()
}

fn bench_svm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("smo");
    group.sample_size(20);
    for n in [60, 180, 400] {
        let data = svm_data(&mut rng, n, 20);
        for (name, kernel) in [("linear", KernelSpec::Linear), ("rbf", KernelSpec::Rbf { sigma: 4.0 })] {
            group.bench_with_input(BenchmarkId::new(name, n), &data, |b, d| {
                b.iter(|| train(d, &kernel, &SvmParams::default()).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_subspace(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("canonical_fit");
    group.sample_size(10);
    for dim in [200, 1000] {
        let classes: Vec<Vec<Vec<f64>>> = (0..20)
            .map(|_| {
                let mu: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                (0..6)
                    .map(|_| mu.iter().map(|m| m + 0.5 * gaussian(&mut rng)).collect())
                    .collect()
            })
            .collect();
        let data = LabeledDataset::new(classes).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &data, |b, d| {
            b.iter(|| fit(d, &FitParams::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_eer(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let genuine: Vec<f64> = (0..600).map(|_| 1.0 + gaussian(&mut rng)).collect();
    let impostor: Vec<f64> = (0..11_400).map(|_| gaussian(&mut rng)).collect();
    let scores = ScoreSet::new(genuine, impostor).unwrap();
    c.bench_function("eer_12k_scores", |b| {
        b.iter(|| {
            let curve = far_frr_curve(black_box(&scores), &scores.sweep_thresholds()).unwrap();
            eer(&curve).unwrap()
        })
    });
}

criterion_group!(benches, bench_gabor, bench_svm, bench_subspace, bench_eer);
criterion_main!(benches);
