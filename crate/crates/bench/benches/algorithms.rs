use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use decode_core::gbdt::{best_split, fit_boosted, Dataset, HyperParams, TreeParams};
use decode_core::logreg::{fit_irls, IrlsOptions};
use decode_core::metrics::{optimize_cutoff, CutoffGrid};
use decode_core::prep::{mcquitty_cluster, DistanceMatrix};
use decode_core::{Feature, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of `k` small-integer inputs with a logistic label.
fn synthetic(n: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); k];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = -1.0;
        for (j, c) in cols.iter_mut().enumerate() {
            let v = f64::from(rng.random_range(0..5u8));
            eta += v * 0.3 / (j + 1) as f64;
            c.push(v);
        }
        y.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
    }
    (cols, y)
}

fn irls(c: &mut Criterion) {
    let (cols, y) = synthetic(2000, 5, 1);
    let names: Vec<String> = (0..5).map(|j| format!("x{j}")).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    c.bench_function("fit_irls 2000x5", |b| {
        b.iter(|| fit_irls(&names, black_box(&refs), &y, &IrlsOptions::default()).unwrap())
    });
}

fn boosting(c: &mut Criterion) {
    let (cols, y) = synthetic(1000, 6, 2);
    let g: Vec<f64> = y.iter().map(|&l| 0.5 - f64::from(u8::from(l))).collect();
    let h = vec![0.25; y.len()];
    let p = TreeParams {
        max_depth: 3,
        min_child_weight: 1.0,
        lambda: 1.0,
        gamma: 0.0,
    };
    c.bench_function("best_split 1000x6", |b| {
        b.iter(|| best_split(black_box(&cols), &g, &h, &p))
    });

    let features = [
        Feature::Age,
        Feature::Cough,
        Feature::Headache,
        Feature::DaysOfSymptoms,
        Feature::MaxTemp,
        Feature::Temperature,
    ]
    .map(Term::Base)
    .to_vec();
    let d = Dataset {
        features,
        columns: cols,
        labels: y,
    };
    c.bench_function("fit_boosted 1000x6", |b| {
        b.iter(|| fit_boosted(black_box(&d), &HyperParams::default(), 0).unwrap())
    });
}

fn cutoff(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = scores.iter().map(|&s| rng.random::<f64>() < s).collect();
    c.bench_function("optimize_cutoff 1000", |b| {
        b.iter(|| optimize_cutoff(black_box(&scores), &labels, 0.85, &CutoffGrid::default()).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 300;
    let points: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| (a - b).abs()).collect())
        .collect();
    c.bench_function("mcquitty 300", |b| {
        b.iter_batched(
            || DistanceMatrix::from_rows(&rows).unwrap(),
            |d| mcquitty_cluster(&d).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, irls, boosting, cutoff, clustering);
criterion_main!(benches);
