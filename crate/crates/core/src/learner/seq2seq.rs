//! Log-linear next-token model conditioned on the previous target token and
//! the normalised bag of source tokens.
//!
//! `logits(prev) = U[:, prev] + V · bow(source) / |source| + b`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clamped_log, Checkpoint, Learner};
use crate::data::{argmax, SeqVocab, SummarizationSample, TokenId};
use crate::error::{Error, Result};

/// Greedy decoding stops after this many tokens if EOS never wins.
pub const MAX_DECODE_LEN: usize = 16;

/// Parameters are stored as `U` (T×T), `V` (T×S), `b` (T), all row-major by
/// output token, where T is the target vocabulary size (content + BOS + EOS)
/// and S the source vocabulary size.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    vocab: SeqVocab,
    params: Vec<f64>,
}

impl Seq2SeqModel {
    pub fn zeros(vocab: SeqVocab) -> Self {
        let t = vocab.target_size();
        let s = vocab.source_size;
        Seq2SeqModel {
            vocab,
            params: vec![0.0; t * t + t * s + t],
        }
    }

    pub fn random(vocab: SeqVocab, scale: f64, seed: u64) -> Self {
        let mut model = Self::zeros(vocab);
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in &mut model.params {
                *p = rng.random_range(-scale..=scale);
            }
        }
        model
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let [source_size, content_size] = ckpt.dims[..] else {
            return Err(Error::Usage(
                "seq2seq checkpoint needs two dimensions".into(),
            ));
        };
        let model = Self::zeros(SeqVocab {
            source_size,
            content_size,
        });
        if ckpt.kind != "seq2seq" || ckpt.params.len() != model.params.len() {
            return Err(Error::Usage(
                "checkpoint does not describe a seq2seq model".into(),
            ));
        }
        Ok(Seq2SeqModel {
            params: ckpt.params.clone(),
            ..model
        })
    }

    pub fn vocab(&self) -> SeqVocab {
        self.vocab
    }

    fn t(&self) -> usize {
        self.vocab.target_size()
    }

    fn v_offset(&self) -> usize {
        self.t() * self.t()
    }

    fn b_offset(&self) -> usize {
        self.v_offset() + self.t() * self.vocab.source_size
    }

    /// Normalised source bag of words.
    fn bag(&self, source: &[TokenId]) -> Vec<f64> {
        let mut bag = vec![0.0; self.vocab.source_size];
        let w = 1.0 / source.len() as f64;
        for &tok in source {
            bag[tok as usize] += w;
        }
        bag
    }

    /// `V · bow + b`, shared by every position of a sample.
    fn context(&self, bag: &[f64]) -> Vec<f64> {
        let s = self.vocab.source_size;
        let v = &self.params[self.v_offset()..self.b_offset()];
        let b = &self.params[self.b_offset()..];
        (0..self.t())
            .map(|o| {
                let row = &v[o * s..(o + 1) * s];
                b[o] + row
                    .iter()
                    .zip(bag)
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
            })
            .collect()
    }

    fn logits_into(&self, context: &[f64], prev: TokenId, out: &mut [f64]) {
        let t = self.t();
        let prev = prev as usize;
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = self.params[o * t + prev] + context[o];
        }
    }

    /// Target-vocabulary logits for the next token.
    pub fn logits(&self, source: &[TokenId], prev: TokenId) -> Vec<f64> {
        let ctx = self.context(&self.bag(source));
        let mut out = vec![0.0; self.t()];
        self.logits_into(&ctx, prev, &mut out);
        out
    }
}

fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    for z in logits {
        *z -= lse;
    }
}

impl Learner for Seq2SeqModel {
    type Sample = SummarizationSample;
    /// Decoded content tokens, EOS excluded.
    type Prediction = Vec<TokenId>;

    fn kind(&self) -> &'static str {
        "seq2seq"
    }

    fn dims(&self) -> Vec<usize> {
        vec![self.vocab.source_size, self.vocab.content_size]
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_sample(&self, sample: &SummarizationSample) -> Result<()> {
        if sample.source.is_empty() || sample.target.is_empty() {
            return Err(Error::Usage(format!(
                "sample {} has an empty sequence",
                sample.id
            )));
        }
        if sample
            .source
            .iter()
            .any(|&t| t as usize >= self.vocab.source_size)
        {
            return Err(Error::Usage(format!(
                "sample {} has a source token out of range",
                sample.id
            )));
        }
        if sample.target.iter().any(|&t| t as usize >= self.t()) {
            return Err(Error::Usage(format!(
                "sample {} has a target token out of range",
                sample.id
            )));
        }
        Ok(())
    }

    /// Mean teacher-forced cross-entropy over target positions (EOS included).
    fn loss(&self, sample: &SummarizationSample) -> f64 {
        let ctx = self.context(&self.bag(&sample.source));
        let mut logits = vec![0.0; self.t()];
        let mut prev = self.vocab.bos();
        let mut total = 0.0;
        for &gold in &sample.target {
            self.logits_into(&ctx, prev, &mut logits);
            log_softmax_in_place(&mut logits);
            total -= clamped_log(logits[gold as usize]);
            prev = gold;
        }
        total / sample.target.len() as f64
    }

    fn accumulate_gradient(&self, sample: &SummarizationSample, scale: f64, grad: &mut [f64]) {
        let t = self.t();
        let s = self.vocab.source_size;
        let bag = self.bag(&sample.source);
        let ctx = self.context(&bag);
        let (v_off, b_off) = (self.v_offset(), self.b_offset());
        let step = scale / sample.target.len() as f64;

        let mut probs = vec![0.0; t];
        let mut dlogits = vec![0.0; t];
        let mut prev = self.vocab.bos();
        for &gold in &sample.target {
            self.logits_into(&ctx, prev, &mut probs);
            log_softmax_in_place(&mut probs);
            for (d, lp) in dlogits.iter_mut().zip(&probs) {
                *d = step * lp.exp();
            }
            dlogits[gold as usize] -= step;

            for (o, d) in dlogits.iter().enumerate() {
                grad[o * t + prev as usize] += d;
                grad[b_off + o] += d;
                let row = &mut grad[v_off + o * s..v_off + (o + 1) * s];
                for (g, &x) in row.iter_mut().zip(&bag) {
                    if x != 0.0 {
                        *g += d * x;
                    }
                }
            }
            prev = gold;
        }
    }

    /// Greedy decoding from BOS; the lowest token id wins ties.
    fn predict_one(&self, sample: &SummarizationSample) -> Vec<TokenId> {
        let ctx = self.context(&self.bag(&sample.source));
        let mut logits = vec![0.0; self.t()];
        let mut prev = self.vocab.bos();
        let mut out = Vec::new();
        while out.len() < MAX_DECODE_LEN {
            self.logits_into(&ctx, prev, &mut logits);
            let next = argmax(&logits) as TokenId;
            if next == self.vocab.eos() {
                break;
            }
            out.push(next);
            prev = next;
        }
        out
    }
}
