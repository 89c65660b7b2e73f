//! Adaptive dropping of persistently high-loss samples.
//!
//! After the warmup epochs, every epoch's losses are fitted with a
//! BIC-selected mixture. Samples whose posterior under the highest-mean
//! component exceeds the threshold are flagged; a sample flagged on enough
//! consecutive epochs is dropped for the rest of training.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::HasId;
use crate::error::{Error, Result};
use crate::gmm::{posteriors, select_model, FitOptions, Selection};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTransform {
    #[default]
    Identity,
    Log1p,
}

impl LossTransform {
    pub fn apply(self, loss: f64) -> f64 {
        match self {
            LossTransform::Identity => loss,
            LossTransform::Log1p => loss.ln_1p(),
        }
    }
}

impl std::str::FromStr for LossTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(LossTransform::Identity),
            "log1p" => Ok(LossTransform::Log1p),
            other => Err(Error::Config(format!("unknown loss transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropPolicy {
    /// Epochs `1..=warmup` never flag anything.
    pub warmup: usize,
    /// Posterior threshold in (0.5, 1].
    pub tau: f64,
    /// Consecutive flagged epochs needed to drop a sample.
    pub persistence: usize,
    /// At most `floor(max_drop_frac × n_train)` samples are ever dropped.
    pub max_drop_frac: f64,
    pub transform: LossTransform,
    pub k_max: usize,
    /// Width of the trailing loss mean fed to the mixture; 1 uses the current epoch only.
    pub window: usize,
    pub fit: FitOptions,
}

impl DropPolicy {
    pub fn classification() -> Self {
        DropPolicy {
            warmup: 5,
            tau: 0.7,
            persistence: 2,
            max_drop_frac: 0.3,
            transform: LossTransform::Identity,
            k_max: 3,
            window: 1,
            fit: FitOptions::default(),
        }
    }

    pub fn summarization() -> Self {
        DropPolicy {
            warmup: 3,
            ..DropPolicy::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0.5, 1], got {}",
                self.tau
            )));
        }
        if self.persistence == 0 {
            return Err(Error::Config("persistence must be at least 1".into()));
        }
        if !(self.max_drop_frac > 0.0 && self.max_drop_frac <= 1.0) {
            return Err(Error::Config(format!(
                "max drop fraction must lie in (0, 1], got {}",
                self.max_drop_frac
            )));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("trailing window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub epoch: usize,
    pub sample_id: usize,
    pub posterior: f64,
}

/// What the scheduler saw and did at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDecision {
    pub epoch: usize,
    /// `None` during warmup.
    pub selection: Option<Selection>,
    /// `(sample_id, posterior)` of every sample flagged this epoch.
    pub flagged: Vec<(usize, f64)>,
    pub dropped: Vec<DropRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropState {
    n_train: usize,
    active: Vec<usize>,
    dropped: Vec<DropRecord>,
    counters: HashMap<usize, usize>,
    history: HashMap<usize, VecDeque<f64>>,
    last_epoch: usize,
}

impl DropState {
    pub fn new(train_ids: Vec<usize>) -> Self {
        DropState {
            n_train: train_ids.len(),
            counters: train_ids.iter().map(|&id| (id, 0)).collect(),
            history: HashMap::new(),
            active: train_ids,
            dropped: Vec::new(),
            last_epoch: 0,
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn dropped(&self) -> &[DropRecord] {
        &self.dropped
    }

    pub fn dropped_ids(&self) -> Vec<usize> {
        self.dropped.iter().map(|r| r.sample_id).collect()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn counter(&self, id: usize) -> Option<usize> {
        self.counters.get(&id).copied()
    }

    /// Largest number of samples that may ever be dropped.
    pub fn cap(&self, policy: &DropPolicy) -> usize {
        (policy.max_drop_frac * self.n_train as f64).floor() as usize
    }

    /// Updates counters and drops from the losses of one epoch.
    ///
    /// `losses` must list the active samples in active order.
    pub fn evaluate_epoch(
        &mut self,
        policy: &DropPolicy,
        epoch: usize,
        losses: &[(usize, f64)],
    ) -> Result<EpochDecision> {
        policy.validate()?;
        if epoch <= self.last_epoch {
            return Err(Error::Sequencing(format!(
                "epoch {epoch} evaluated after epoch {}",
                self.last_epoch
            )));
        }
        if losses.len() != self.active.len()
            || losses.iter().zip(&self.active).any(|((id, _), a)| id != a)
        {
            return Err(Error::Sequencing(format!(
                "losses for {} samples do not match the {} active samples",
                losses.len(),
                self.active.len()
            )));
        }
        self.last_epoch = epoch;

        for &(id, loss) in losses {
            let h = self.history.entry(id).or_default();
            h.push_back(loss);
            while h.len() > policy.window {
                h.pop_front();
            }
        }

        let mut decision = EpochDecision {
            epoch,
            selection: None,
            flagged: Vec::new(),
            dropped: Vec::new(),
        };
        if epoch <= policy.warmup {
            return Ok(decision);
        }

        let features: Vec<f64> = self
            .active
            .iter()
            .map(|id| {
                let h = &self.history[id];
                policy
                    .transform
                    .apply(h.iter().sum::<f64>() / h.len() as f64)
            })
            .collect();
        let k_max = policy.k_max.min(features.len());
        let selection = select_model(&features, k_max, &policy.fit)?;

        if selection.k() == 1 {
            for id in &self.active {
                self.counters.insert(*id, 0);
            }
            decision.selection = Some(selection);
            return Ok(decision);
        }

        let noisy = selection.model.highest_component();
        let post = posteriors(&selection.model, &features).column(noisy);
        let mut candidates = Vec::new();
        for (&id, &p) in self.active.iter().zip(&post) {
            let counter = self.counters.entry(id).or_insert(0);
            if p > policy.tau {
                *counter += 1;
                decision.flagged.push((id, p));
                if *counter >= policy.persistence {
                    candidates.push((id, p));
                }
            } else {
                *counter = 0;
            }
        }

        let room = self.cap(policy).saturating_sub(self.dropped.len());
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(room);
        let removed: HashSet<usize> = candidates.iter().map(|&(id, _)| id).collect();
        for &(id, p) in &candidates {
            let record = DropRecord {
                epoch,
                sample_id: id,
                posterior: p,
            };
            self.dropped.push(record);
            decision.dropped.push(record);
            self.counters.remove(&id);
            self.history.remove(&id);
        }
        self.active.retain(|id| !removed.contains(id));
        decision.selection = Some(selection);
        Ok(decision)
    }
}

/// Samples still active, in their original order.
pub fn active_samples<S: HasId + Clone>(state: &DropState, samples: &[S]) -> Vec<S> {
    let active: HashSet<usize> = state.active().iter().copied().collect();
    samples
        .iter()
        .filter(|s| active.contains(&s.id()))
        .cloned()
        .collect()
}

/// Writes `gmm_trace.csv`: `epoch, K_selected, bic_1..bic_Kmax` then
/// `weight_j, mean_j, var_j` for `j = 1..Kmax`. Absent values are empty.
pub fn write_gmm_trace(
    decisions: &[EpochDecision],
    k_max: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["epoch".to_string(), "K_selected".to_string()];
    header.extend((1..=k_max).map(|k| format!("bic_{k}")));
    for j in 1..=k_max {
        header.extend([
            format!("weight_{j}"),
            format!("mean_{j}"),
            format!("var_{j}"),
        ]);
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;

    for d in decisions {
        let Some(sel) = &d.selection else { continue };
        let mut row = vec![d.epoch.to_string(), sel.k().to_string()];
        row.extend((0..k_max).map(|k| sel.bics.get(k).map(f64::to_string).unwrap_or_default()));
        for j in 0..k_max {
            let m = &sel.model;
            let cell = |v: Option<&f64>| v.map(f64::to_string).unwrap_or_default();
            row.extend([
                cell(m.weights.get(j)),
                cell(m.means.get(j)),
                cell(m.variances.get(j)),
            ]);
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairs(ids: &[usize], losses: &[f64]) -> Vec<(usize, f64)> {
        ids.iter().copied().zip(losses.iter().copied()).collect()
    }

    /// 90 samples near 0.2 and 10 (ids 90..100) near 3.0.
    fn scripted_losses(rng: &mut ChaCha8Rng, ids: &[usize]) -> Vec<f64> {
        ids.iter()
            .map(|&id| {
                let base = if id >= 90 { 3.0 } else { 0.2 };
                base + rng.random_range(-0.05..0.05)
            })
            .collect()
    }

    #[test]
    fn warmup_never_flags() {
        let policy = DropPolicy::summarization();
        let mut state = DropState::new((0..100).collect());
        let ids: Vec<usize> = (0..100).collect();
        let losses: Vec<f64> = ids
            .iter()
            .map(|&i| if i < 50 { 0.1 } else { 9.0 })
            .collect();
        for epoch in 1..=3 {
            let d = state
                .evaluate_epoch(&policy, epoch, &pairs(&ids, &losses))
                .unwrap();
            assert!(d.flagged.is_empty() && d.selection.is_none());
        }
        let d = state
            .evaluate_epoch(&policy, 4, &pairs(&ids, &losses))
            .unwrap();
        assert_eq!(d.flagged.len(), 50);
    }

    #[test]
    fn unimodal_losses_select_one_component() {
        let policy = DropPolicy::classification();
        let mut state = DropState::new((0..100).collect());
        let ids: Vec<usize> = (0..100).collect();
        let d = state
            .evaluate_epoch(&policy, 6, &pairs(&ids, &[0.4; 100]))
            .unwrap();
        assert_eq!(d.selection.unwrap().k(), 1);
        assert!(d.flagged.is_empty());
    }

    #[test]
    fn scripted_noisy_ids_dropped_after_persistence() {
        let policy = DropPolicy::classification();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = DropState::new((0..100).collect());
        let ids: Vec<usize> = (0..100).collect();

        let l6 = scripted_losses(&mut rng, &ids);
        let d6 = state.evaluate_epoch(&policy, 6, &pairs(&ids, &l6)).unwrap();
        assert!(d6.dropped.is_empty());
        let flagged: Vec<usize> = d6.flagged.iter().map(|f| f.0).collect();
        assert_eq!(flagged, (90..100).collect::<Vec<_>>());

        // Posteriors agree with a direct density ratio.
        let sel = d6.selection.unwrap();
        let m = &sel.model;
        let density = |j: usize, x: f64| {
            m.weights[j] * (-(x - m.means[j]).powi(2) / (2.0 * m.variances[j])).exp()
                / m.variances[j].sqrt()
        };
        for &(id, p) in &d6.flagged {
            let x = l6[id];
            let total: f64 = (0..m.k()).map(|j| density(j, x)).sum();
            assert!((p - density(m.k() - 1, x) / total).abs() < 1e-9);
        }

        let l7 = scripted_losses(&mut rng, &ids);
        let d7 = state.evaluate_epoch(&policy, 7, &pairs(&ids, &l7)).unwrap();
        let mut dropped: Vec<usize> = d7.dropped.iter().map(|r| r.sample_id).collect();
        dropped.sort_unstable();
        assert_eq!(dropped, (90..100).collect::<Vec<_>>());
        assert_eq!(state.active().len(), 90);
    }

    #[test]
    fn cap_binds_highest_posterior_first() {
        let policy = DropPolicy {
            max_drop_frac: 0.05,
            persistence: 1,
            ..DropPolicy::classification()
        };
        let mut state = DropState::new((0..100).collect());
        let ids: Vec<usize> = (0..100).collect();
        let losses: Vec<f64> = ids
            .iter()
            .map(|&i| {
                if i >= 90 {
                    3.0 + (i - 90) as f64 * 0.01
                } else {
                    0.2 + i as f64 * 1e-4
                }
            })
            .collect();
        let d = state
            .evaluate_epoch(&policy, 6, &pairs(&ids, &losses))
            .unwrap();
        assert_eq!(d.dropped.len(), 5);
        assert_eq!(state.dropped().len(), state.cap(&policy));
        let ps: Vec<f64> = d.dropped.iter().map(|r| r.posterior).collect();
        assert!(ps.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn active_samples_follow_state() {
        #[derive(Clone, Debug, PartialEq)]
        struct S(usize);
        impl HasId for S {
            fn id(&self) -> usize {
                self.0
            }
        }
        let samples: Vec<S> = (0..700).map(S).collect();
        let state = DropState::new((0..700).collect());
        assert_eq!(active_samples(&state, &samples), samples);

        let mut state = DropState::new((0..700).collect());
        state.active.retain(|&id| id >= 105);
        let active = active_samples(&state, &samples);
        assert_eq!(active.len(), 595);
        assert!(active.windows(2).all(|w| w[0].0 < w[1].0));

        let policy = DropPolicy {
            max_drop_frac: 0.3,
            ..DropPolicy::classification()
        };
        assert_eq!(700 - DropState::new((0..700).collect()).cap(&policy), 490);
    }

    #[test]
    fn mismatched_losses_rejected() {
        let policy = DropPolicy::classification();
        let mut state = DropState::new(vec![0, 1, 2]);
        let err = state
            .evaluate_epoch(&policy, 1, &[(0, 0.1), (2, 0.1)])
            .unwrap_err();
        assert!(matches!(err, Error::Sequencing(_)));
        state
            .evaluate_epoch(&policy, 1, &[(0, 0.1), (1, 0.1), (2, 0.1)])
            .unwrap();
        let err = state
            .evaluate_epoch(&policy, 1, &[(0, 0.1), (1, 0.1), (2, 0.1)])
            .unwrap_err();
        assert!(matches!(err, Error::Sequencing(_)));
    }

    #[test]
    fn invalid_policies() {
        let base = DropPolicy::classification();
        assert!(DropPolicy { tau: 0.5, ..base }.validate().is_err());
        assert!(DropPolicy { tau: 1.01, ..base }.validate().is_err());
        assert!(DropPolicy {
            persistence: 0,
            ..base
        }
        .validate()
        .is_err());
        assert!(DropPolicy {
            max_drop_frac: 0.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(base.validate().is_ok());
    }
}
