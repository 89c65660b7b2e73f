use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mantra_core::data::{
    generate_classification_dataset, generate_summarization_dataset, SplitSizes,
};
use mantra_core::gmm::{fit_em, select_model, FitOptions};
use mantra_core::learner::{per_sample_losses, predict, train_epoch};
use mantra_core::{bleu4, ClassifierModel, Seq2SeqModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn loss_like(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let clean = Normal::new(0.4, 0.1).unwrap();
    let noisy = Normal::new(1.6, 0.3).unwrap();
    (0..n)
        .map(|_| {
            let x: f64 = if rng.random::<f64>() < 0.85 {
                clean.sample(&mut rng)
            } else {
                noisy.sample(&mut rng)
            };
            x.abs()
        })
        .collect()
}

fn gmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gmm");
    for n in [700, 1000, 5000] {
        let xs = loss_like(n);
        group.bench_with_input(BenchmarkId::new("fit_em_k2", n), &xs, |b, xs| {
            b.iter(|| fit_em(black_box(xs), 2, &FitOptions::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("select_kmax3", n), &xs, |b, xs| {
            b.iter(|| select_model(black_box(xs), 3, &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn learners(c: &mut Criterion) {
    let cls = generate_classification_dataset(1, SplitSizes::classification_default(), 16).unwrap();
    let sum = generate_summarization_dataset(1, SplitSizes::summarization_default()).unwrap();
    let cls_model = ClassifierModel::random(16, 0.1, 1);
    let sum_model = Seq2SeqModel::random(sum.vocab, 0.1, 1);

    let mut group = c.benchmark_group("learner");
    group.bench_function("classifier_losses_700", |b| {
        b.iter(|| per_sample_losses(&cls_model, black_box(&cls.split.train)).unwrap())
    });
    group.bench_function("classifier_epoch_700", |b| {
        b.iter(|| {
            train_epoch(
                &cls_model,
                black_box(&cls.split.train),
                &TrainConfig::classification(),
                1,
            )
            .unwrap()
        })
    });
    group.bench_function("seq2seq_losses_1000", |b| {
        b.iter(|| per_sample_losses(&sum_model, black_box(&sum.split.train)).unwrap())
    });
    group.bench_function("seq2seq_epoch_1000", |b| {
        b.iter(|| {
            train_epoch(
                &sum_model,
                black_box(&sum.split.train),
                &TrainConfig::summarization(),
                1,
            )
            .unwrap()
        })
    });
    group.bench_function("seq2seq_decode_100", |b| {
        b.iter(|| predict(&sum_model, black_box(&sum.split.test)).unwrap())
    });
    group.finish();
}

fn bleu(c: &mut Criterion) {
    let sum = generate_summarization_dataset(2, SplitSizes::new(1000, 1, 1)).unwrap();
    let refs: Vec<Vec<u32>> = sum
        .split
        .train
        .iter()
        .map(|s| s.content().to_vec())
        .collect();
    let mut cands = refs.clone();
    for (i, c) in cands.iter_mut().enumerate() {
        c.rotate_left(i % 3);
    }
    c.bench_function("bleu4_1000", |b| {
        b.iter(|| bleu4(black_box(&cands), black_box(&refs)).unwrap())
    });
}

criterion_group!(benches, gmm, learners, bleu);
criterion_main!(benches);
