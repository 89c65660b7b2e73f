//! Small trainable models with closed-form gradients.
//!
//! Both learners keep their parameters in one flat vector so that training,
//! finite-difference checks and checkpoints work the same way for either.

pub mod classifier;
pub mod seq2seq;

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::HasId;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

pub trait Learner: Clone {
    type Sample: HasId;
    type Prediction;

    /// Short model name written to checkpoints.
    fn kind(&self) -> &'static str;
    /// Shape information written to checkpoints.
    fn dims(&self) -> Vec<usize>;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Rejects samples the model cannot score (wrong dimension, token out of range).
    fn check_sample(&self, sample: &Self::Sample) -> Result<()>;

    /// Loss of one already-checked sample.
    fn loss(&self, sample: &Self::Sample) -> f64;

    /// Adds `scale * ∂loss/∂params` into `grad`.
    fn accumulate_gradient(&self, sample: &Self::Sample, scale: f64, grad: &mut [f64]);

    fn predict_one(&self, sample: &Self::Sample) -> Self::Prediction;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Half-width of the uniform initialisation; 0 gives a zero model.
    pub init_scale: f64,
}

impl TrainConfig {
    pub fn classification() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 32,
            shuffle_seed: 0,
            init_scale: 0.0,
        }
    }

    /// Token-level cross-entropy spreads each sample's gradient over 42
    /// outputs, so the log-linear model needs a larger step than the
    /// classifier to learn anything within 10 epochs.
    pub fn summarization() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::classification()
        }
    }

    /// The 5e-5 rate used for fine-tuning billion-parameter models. Far too
    /// small for the linear learners here; kept for like-for-like runs.
    pub fn large_model_rate() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            ..TrainConfig::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config(
                "init scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Loss of every sample, in input order.
pub fn per_sample_losses<L: Learner>(model: &L, samples: &[L::Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            model.check_sample(s)?;
            Ok(model.loss(s))
        })
        .collect()
}

pub fn mean_loss<L: Learner>(model: &L, samples: &[L::Sample]) -> Result<f64> {
    let losses = per_sample_losses(model, samples)?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Gradient of the mean loss over `samples`.
pub fn mean_gradient<L: Learner>(model: &L, samples: &[L::Sample]) -> Vec<f64> {
    let mut grad = vec![0.0; model.params().len()];
    let scale = 1.0 / samples.len().max(1) as f64;
    for s in samples {
        model.accumulate_gradient(s, scale, &mut grad);
    }
    grad
}

/// One pass of mini-batch gradient descent over `samples`.
///
/// The visiting order is a shuffle seeded by `(config.shuffle_seed, epoch)`,
/// so the same inputs always produce the same parameters.
pub fn train_epoch<L: Learner>(
    model: &L,
    samples: &[L::Sample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<L> {
    if samples.is_empty() {
        return Err(Error::Sequencing(
            "cannot train on an empty active set".into(),
        ));
    }
    config.validate()?;
    for s in samples {
        model.check_sample(s)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);

    let mut next = model.clone();
    let mut grad = vec![0.0; next.params().len()];
    for batch in order.chunks(config.batch_size) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            next.accumulate_gradient(&samples[i], scale, &mut grad);
        }
        for (p, g) in next.params_mut().iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
    }
    if next.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Usage(format!(
            "non-finite parameters after epoch {epoch}; learning rate {} too large",
            config.learning_rate
        )));
    }
    Ok(next)
}

pub fn predict<L: Learner>(model: &L, samples: &[L::Sample]) -> Result<Vec<L::Prediction>> {
    samples
        .iter()
        .map(|s| {
            model.check_sample(s)?;
            Ok(model.predict_one(s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    pub step: f64,
    /// Parameters to probe; all of them when the model is smaller.
    pub probes: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tolerance: 1e-4,
            step: 1e-5,
            probes: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_param: usize,
    pub passed: bool,
}

/// Compares analytic gradients with central finite differences on a seeded
/// subset of parameters.
pub fn gradient_check<L: Learner>(
    model: &L,
    sample: &L::Sample,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(Error::Config(
            "gradient check tolerance must be positive".into(),
        ));
    }
    model.check_sample(sample)?;
    let n = model.params().len();
    let mut analytic = vec![0.0; n];
    model.accumulate_gradient(sample, 1.0, &mut analytic);

    let probes: Vec<usize> = if n <= options.probes {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut picked = index::sample(&mut rng, n, options.probes).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut probe = model.clone();
    let mut worst = (0.0_f64, 0usize);
    for &i in &probes {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + options.step;
        let plus = probe.loss(sample);
        probe.params_mut()[i] = original - options.step;
        let minus = probe.loss(sample);
        probe.params_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * options.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }

    Ok(GradCheckReport {
        checked: probes.len(),
        max_relative_error: worst.0,
        worst_param: worst.1,
        passed: worst.0 < options.tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of<L: Learner>(model: &L) -> Self {
        Checkpoint {
            kind: model.kind().to_owned(),
            dims: model.dims(),
            params: model.params().to_vec(),
        }
    }

    /// Writes `model.ckpt.json`-style JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Clamped natural log of a probability given as a log-probability.
pub(crate) fn clamped_log(log_p: f64) -> f64 {
    log_p.clamp(PROB_EPS.ln(), (1.0 - PROB_EPS).ln())
}
