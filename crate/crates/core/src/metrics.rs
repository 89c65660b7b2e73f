//! Task metrics (micro-F1, corpus BLEU-4) and detection quality against the
//! injected noise mask.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::{Intent, LabelSet};
use crate::error::{Error, Result};
use crate::noise::NoiseMask;

/// True/false positive and false negative totals over all classes and examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MicroCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MicroCounts {
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// Harmonic mean of micro precision and recall; 0 when both vanish.
    pub fn f1(&self) -> f64 {
        let p = self.precision().unwrap_or(0.0);
        let r = self.recall().unwrap_or(0.0);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

pub fn micro_counts(gold: &[LabelSet], predicted: &[LabelSet]) -> Result<MicroCounts> {
    if gold.len() != predicted.len() {
        return Err(Error::Usage(format!(
            "{} gold label sets but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    let mut c = MicroCounts::default();
    for (g, p) in gold.iter().zip(predicted) {
        let (g, p) = (g.bits(), p.bits());
        c.tp += (g & p).count_ones() as usize;
        c.fp += (!g & p).count_ones() as usize;
        c.fn_ += (g & !p).count_ones() as usize;
    }
    Ok(c)
}

/// Micro-averaged F1 over the seven intents.
pub fn micro_f1(gold: &[LabelSet], predicted: &[LabelSet]) -> Result<f64> {
    Ok(micro_counts(gold, predicted)?.f1())
}

/// Clipped n-gram matches and candidate n-gram totals, summed over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NgramCounts {
    pub matched: usize,
    pub total: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Per-order clipped counts for `n = 1..=4`.
pub fn clipped_counts<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
) -> Result<[NgramCounts; 4]> {
    if candidates.len() != references.len() {
        return Err(Error::Usage(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut out = [NgramCounts::default(); 4];
    for (cand, refr) in candidates.iter().zip(references) {
        for (i, slot) in out.iter_mut().enumerate() {
            let n = i + 1;
            let ref_counts = ngram_counts(refr, n);
            for (gram, count) in ngram_counts(cand, n) {
                slot.matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                slot.total += count;
            }
        }
    }
    Ok(out)
}

/// Corpus BLEU-4 with one reference per candidate.
///
/// Any order whose clipped match count is zero gets one added to both its
/// numerator and denominator. The brevity penalty is `exp(1 − r/c)` when the
/// total candidate length `c` does not exceed the reference length `r`.
/// Returns a value in [0, 1].
pub fn bleu4<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    let counts = clipped_counts(candidates, references)?;
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    if c == 0 {
        return Ok(0.0);
    }
    let log_precision: f64 = counts
        .iter()
        .map(|k| {
            let (num, den) = if k.matched == 0 {
                (1.0, k.total as f64 + 1.0)
            } else {
                (k.matched as f64, k.total as f64)
            };
            (num / den).ln()
        })
        .sum::<f64>()
        / 4.0;
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok((bp * log_precision.exp()).clamp(0.0, 1.0))
}

/// Dropped samples scored against the injected mask; positive = dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Precision divided by the injected noise rate.
    pub lift: Option<f64>,
}

impl DetectionReport {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn dropped(&self) -> usize {
        self.true_positives + self.false_positives
    }
}

pub fn detection_report(dropped: &[usize], mask: &NoiseMask) -> Result<DetectionReport> {
    let dropped: HashSet<usize> = dropped.iter().copied().collect();
    if let Some(id) = dropped.iter().find(|id| !mask.contains(**id)) {
        return Err(Error::Usage(format!(
            "dropped id {id} is not a training id"
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&id, &noisy) in mask.ids().iter().zip(mask.bits()) {
        match (dropped.contains(&id), noisy) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let lift = precision.filter(|_| mask.rate > 0.0).map(|p| p / mask.rate);
    Ok(DetectionReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
        lift,
    })
}

/// Per-intent gold frequency, handy for reading micro-F1 on skewed data.
pub fn label_support(gold: &[LabelSet]) -> [usize; Intent::COUNT] {
    let mut out = [0; Intent::COUNT];
    for g in gold {
        for i in g.iter() {
            out[i.index()] += 1;
        }
    }
    out
}
