use mantra_core::data::{
    generate_classification_dataset, SeqVocab, SplitSizes, SummarizationSample,
};
use mantra_core::learner::{mean_gradient, mean_loss, predict, train_epoch};
use mantra_core::{ClassifierModel, Learner, Seq2SeqModel, TrainConfig};

/// Ten samples over disjoint token blocks, so each previous token and each
/// source bag determines the next target token.
fn disjoint_corpus(vocab: SeqVocab) -> Vec<SummarizationSample> {
    (0..10u32)
        .map(|i| {
            let source: Vec<u32> = (4 * i..4 * i + 4).collect();
            let mut target: Vec<u32> = source.iter().rev().copied().collect();
            target.push(vocab.eos());
            SummarizationSample {
                id: i as usize,
                source,
                target,
            }
        })
        .collect()
}

#[test]
fn seq2seq_memorises_a_small_clean_set() {
    let vocab = SeqVocab::synthetic();
    let samples = disjoint_corpus(vocab);
    let cfg = TrainConfig {
        learning_rate: 2.0,
        batch_size: 10,
        ..TrainConfig::summarization()
    };
    let mut model = Seq2SeqModel::zeros(vocab);
    for epoch in 1..=300 {
        model = train_epoch(&model, &samples, &cfg, epoch).unwrap();
    }
    let decoded = predict(&model, &samples).unwrap();
    for (s, d) in samples.iter().zip(&decoded) {
        assert_eq!(d.as_slice(), s.content(), "sample {}", s.id);
    }
    assert!(mean_loss(&model, &samples).unwrap() < 0.1 * 42f64.ln());
}

#[test]
fn classifier_loss_falls_over_the_first_five_epochs() {
    let data =
        generate_classification_dataset(1, SplitSizes::classification_default(), 16).unwrap();
    let cfg = TrainConfig::classification();
    let mut model = ClassifierModel::zeros(16);
    let mut losses = vec![mean_loss(&model, &data.split.train).unwrap()];
    for epoch in 1..=5 {
        model = train_epoch(&model, &data.split.train, &cfg, epoch).unwrap();
        losses.push(mean_loss(&model, &data.split.train).unwrap());
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn small_full_batch_steps_never_raise_the_loss() {
    let data =
        generate_classification_dataset(2, SplitSizes::classification_default(), 16).unwrap();
    let train = &data.split.train;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: train.len(),
        ..TrainConfig::classification()
    };
    let mut model = ClassifierModel::random(16, 0.3, 9);
    let mut previous = mean_loss(&model, train).unwrap();
    for epoch in 1..=20 {
        model = train_epoch(&model, train, &cfg, epoch).unwrap();
        let now = mean_loss(&model, train).unwrap();
        assert!(now <= previous, "epoch {epoch}: {previous} -> {now}");
        previous = now;
    }
}

#[test]
fn full_batch_epoch_is_one_gradient_step() {
    let data = generate_classification_dataset(4, SplitSizes::new(30, 1, 1), 6).unwrap();
    let train = &data.split.train;
    let model = ClassifierModel::random(6, 0.5, 1);
    let cfg = TrainConfig {
        learning_rate: 0.25,
        batch_size: train.len(),
        ..TrainConfig::classification()
    };
    let stepped = train_epoch(&model, train, &cfg, 1).unwrap();
    let grad = mean_gradient(&model, train);
    for ((a, b), g) in stepped.params().iter().zip(model.params()).zip(&grad) {
        assert!((a - (b - 0.25 * g)).abs() < 1e-12);
    }
}

#[test]
fn shuffle_order_depends_on_the_epoch_only_through_the_seed() {
    let data = generate_classification_dataset(5, SplitSizes::new(64, 1, 1), 8).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        ..TrainConfig::classification()
    };
    let model = ClassifierModel::zeros(8);
    let a = train_epoch(&model, &data.split.train, &cfg, 3).unwrap();
    let b = train_epoch(&model, &data.split.train, &cfg, 3).unwrap();
    let c = train_epoch(&model, &data.split.train, &cfg, 4).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}
