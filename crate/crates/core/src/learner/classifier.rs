//! Independent per-intent logistic regression.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clamped_log, Checkpoint, Learner};
use crate::data::{dot, ClassificationSample, Intent, LabelSet};
use crate::error::{Error, Result};

/// Weights `W` (7×d, row-major) followed by biases `b` (7) in one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    n_features: usize,
    params: Vec<f64>,
}

impl ClassifierModel {
    pub fn zeros(n_features: usize) -> Self {
        ClassifierModel {
            n_features,
            params: vec![0.0; Intent::COUNT * (n_features + 1)],
        }
    }

    /// Parameters uniform in `[-scale, scale]`.
    pub fn random(n_features: usize, scale: f64, seed: u64) -> Self {
        let mut model = Self::zeros(n_features);
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in &mut model.params {
                *p = rng.random_range(-scale..=scale);
            }
        }
        model
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let [n_features] = ckpt.dims[..] else {
            return Err(Error::Usage(
                "classifier checkpoint needs one dimension".into(),
            ));
        };
        if ckpt.kind != "classifier" || ckpt.params.len() != Intent::COUNT * (n_features + 1) {
            return Err(Error::Usage(
                "checkpoint does not describe a classifier".into(),
            ));
        }
        Ok(ClassifierModel {
            n_features,
            params: ckpt.params.clone(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weights(&self, intent: Intent) -> &[f64] {
        let d = self.n_features;
        &self.params[intent.index() * d..(intent.index() + 1) * d]
    }

    pub fn bias(&self, intent: Intent) -> f64 {
        self.params[Intent::COUNT * self.n_features + intent.index()]
    }

    pub fn logits(&self, features: &[f64]) -> [f64; Intent::COUNT] {
        Intent::ALL.map(|i| dot(self.weights(i), features) + self.bias(i))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl Learner for ClassifierModel {
    type Sample = ClassificationSample;
    type Prediction = LabelSet;

    fn kind(&self) -> &'static str {
        "classifier"
    }

    fn dims(&self) -> Vec<usize> {
        vec![self.n_features]
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_sample(&self, sample: &ClassificationSample) -> Result<()> {
        if sample.features.len() != self.n_features {
            return Err(Error::Usage(format!(
                "sample {} has {} features, model expects {}",
                sample.id,
                sample.features.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Mean binary cross-entropy over the seven intents.
    fn loss(&self, sample: &ClassificationSample) -> f64 {
        let targets = sample.labels.as_targets();
        let logits = self.logits(&sample.features);
        let total: f64 = logits
            .iter()
            .zip(targets)
            .map(|(&z, y)| {
                let log_p = clamped_log(log_sigmoid(z));
                let log_q = clamped_log(log_sigmoid(-z));
                -(y * log_p + (1.0 - y) * log_q)
            })
            .sum();
        total / Intent::COUNT as f64
    }

    fn accumulate_gradient(&self, sample: &ClassificationSample, scale: f64, grad: &mut [f64]) {
        let d = self.n_features;
        let targets = sample.labels.as_targets();
        let logits = self.logits(&sample.features);
        let bias_offset = Intent::COUNT * d;
        for (l, (&z, y)) in logits.iter().zip(targets).enumerate() {
            let g = scale * (sigmoid(z) - y) / Intent::COUNT as f64;
            for (gw, x) in grad[l * d..(l + 1) * d].iter_mut().zip(&sample.features) {
                *gw += g * x;
            }
            grad[bias_offset + l] += g;
        }
    }

    /// Intent `l` is predicted iff its sigmoid score is strictly above 0.5.
    fn predict_one(&self, sample: &ClassificationSample) -> LabelSet {
        let logits = self.logits(&sample.features);
        Intent::ALL
            .into_iter()
            .filter(|i| sigmoid(logits[i.index()]) > 0.5)
            .collect()
    }
}
