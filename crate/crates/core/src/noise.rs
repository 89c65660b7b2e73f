//! Controlled label corruption of the training split.
//!
//! Only training samples are ever passed in here; validation and test splits
//! stay untouched. The returned [`NoiseMask`] is ground truth for evaluation
//! and must not reach the learner or the scheduler.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassificationSample, Intent, LabelSet, SeqVocab, SummarizationSample, TokenId};
use crate::error::{Error, Result};

/// How a selected classification sample is corrupted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Replace the whole label set by one intent the sample did not have.
    #[default]
    ReplaceSet,
    /// Swap one original intent for one it did not have.
    FlipOne,
}

/// Which training samples were corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMask {
    ids: Vec<usize>,
    corrupted: Vec<bool>,
    index: HashMap<usize, usize>,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseMask {
    pub fn new(ids: Vec<usize>, corrupted: Vec<bool>, rate: f64, seed: u64) -> Self {
        assert_eq!(ids.len(), corrupted.len(), "mask ids and bits must align");
        let index = ids.iter().enumerate().map(|(pos, &id)| (id, pos)).collect();
        NoiseMask {
            ids,
            corrupted,
            index,
            rate,
            seed,
        }
    }

    /// A mask with nothing corrupted.
    pub fn clean(ids: Vec<usize>) -> Self {
        let n = ids.len();
        NoiseMask::new(ids, vec![false; n], 0.0, 0)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn bits(&self) -> &[bool] {
        &self.corrupted
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    pub fn corrupted_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.ids
            .iter()
            .zip(&self.corrupted)
            .filter(|(_, &c)| c)
            .map(|(&id, _)| id)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.index.contains_key(&id)
    }

    /// `None` when `id` is not a training id.
    pub fn is_corrupted(&self, id: usize) -> Option<bool> {
        self.index.get(&id).map(|&pos| self.corrupted[pos])
    }

    /// Writes `noise_mask.csv` with columns `sample_id, corrupted`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["sample_id", "corrupted"])
            .map_err(|e| Error::csv(path, e))?;
        for (id, c) in self.ids.iter().zip(&self.corrupted) {
            w.write_record([id.to_string(), u8::from(*c).to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `round(rate × n)` with halves rounded up.
pub fn corruption_count(rate: f64, n: usize) -> usize {
    (rate * n as f64 + 0.5).floor() as usize
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "noise rate must lie in [0, 1], got {rate}"
        )));
    }
    Ok(())
}

/// Corrupts `round(rate × n)` seeded-uniform training samples.
///
/// Samples that already carry every intent cannot receive a wrong one and are
/// skipped during selection.
pub fn inject_label_noise(
    train: &[ClassificationSample],
    rate: f64,
    seed: u64,
    mode: NoiseMode,
) -> Result<(Vec<ClassificationSample>, NoiseMask)> {
    check_rate(rate)?;
    let target = corruption_count(rate, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);

    let mut out = train.to_vec();
    let mut corrupted = vec![false; train.len()];
    let mut selected = 0;
    for pos in order {
        if selected == target {
            break;
        }
        let original = train[pos].labels;
        let wrong: Vec<Intent> = original.complement().collect();
        let Some(&replacement) = wrong.choose(&mut rng) else {
            continue;
        };
        out[pos].labels = match mode {
            NoiseMode::ReplaceSet => LabelSet::single(replacement),
            NoiseMode::FlipOne => {
                let present: Vec<Intent> = original.iter().collect();
                let removed = *present.choose(&mut rng).expect("label sets are non-empty");
                let mut labels = original;
                labels.remove(removed);
                labels.insert(replacement);
                labels
            }
        };
        corrupted[pos] = true;
        selected += 1;
    }
    if selected < target {
        return Err(Error::Config(format!(
            "cannot corrupt {target} samples: only {selected} lack at least one intent"
        )));
    }

    let ids = train.iter().map(|s| s.id).collect();
    Ok((out, NoiseMask::new(ids, corrupted, rate, seed)))
}

/// Replaces the target content of `round(rate × n)` samples with uniform
/// random content tokens, keeping every length and the trailing EOS.
pub fn inject_summary_noise(
    train: &[SummarizationSample],
    rate: f64,
    seed: u64,
    vocab: &SeqVocab,
) -> Result<(Vec<SummarizationSample>, NoiseMask)> {
    check_rate(rate)?;
    let target = corruption_count(rate, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);

    let mut out = train.to_vec();
    let mut corrupted = vec![false; train.len()];
    for &pos in order.iter().take(target) {
        let sample = &mut out[pos];
        let content_len = sample.target.len().saturating_sub(1);
        for token in &mut sample.target[..content_len] {
            *token = rng.random_range(0..vocab.content_size as TokenId);
        }
        corrupted[pos] = true;
    }

    let ids = train.iter().map(|s| s.id).collect();
    Ok((out, NoiseMask::new(ids, corrupted, rate, seed)))
}

/// Fraction of samples carrying each intent.
pub fn label_priors(samples: &[ClassificationSample]) -> [f64; Intent::COUNT] {
    let mut counts = [0.0; Intent::COUNT];
    for s in samples {
        for intent in s.labels.iter() {
            counts[intent.index()] += 1.0;
        }
    }
    let n = samples.len().max(1) as f64;
    counts.map(|c| c / n)
}

/// Per-intent change in label frequency caused by corruption (after − before).
pub fn prior_drift(
    before: &[ClassificationSample],
    after: &[ClassificationSample],
) -> [f64; Intent::COUNT] {
    let b = label_priors(before);
    let a = label_priors(after);
    std::array::from_fn(|i| a[i] - b[i])
}
