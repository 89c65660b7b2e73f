//! Per-sample loss trajectories and the group statistics computed from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseMask;
use crate::scheduler::LossTransform;

/// Losses recorded at the end of each epoch, one entry per active sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrajectory {
    epochs: Vec<Vec<(usize, f64)>>,
}

impl LossTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of epochs recorded; epochs are numbered from 1.
    pub fn epochs_recorded(&self) -> usize {
        self.epochs.len()
    }

    /// `(sample_id, loss)` pairs for `epoch`, in active-set order.
    pub fn epoch(&self, epoch: usize) -> Option<&[(usize, f64)]> {
        epoch
            .checked_sub(1)
            .and_then(|e| self.epochs.get(e))
            .map(Vec::as_slice)
    }

    pub fn losses(&self, epoch: usize) -> Option<Vec<f64>> {
        self.epoch(epoch)
            .map(|rows| rows.iter().map(|&(_, l)| l).collect())
    }

    /// Loss history of one sample, `None` at epochs where it was inactive.
    pub fn sample_history(&self, id: usize) -> Vec<Option<f64>> {
        self.epochs
            .iter()
            .map(|rows| rows.iter().find(|(i, _)| *i == id).map(|&(_, l)| l))
            .collect()
    }

    pub fn record_epoch(&mut self, epoch: usize, ids: &[usize], losses: &[f64]) -> Result<()> {
        let expected = self.epochs.len() + 1;
        if epoch != expected {
            return Err(Error::Sequencing(format!(
                "expected epoch {expected}, got {epoch}"
            )));
        }
        if ids.len() != losses.len() {
            return Err(Error::Sequencing(format!(
                "{} ids but {} losses at epoch {epoch}",
                ids.len(),
                losses.len()
            )));
        }
        if let Some(bad) = losses.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Usage(format!(
                "loss {bad} is not a finite non-negative value"
            )));
        }
        self.epochs
            .push(ids.iter().copied().zip(losses.iter().copied()).collect());
        Ok(())
    }

    /// Writes `trajectory.csv`: `epoch, sample_id, loss, is_noisy, active`.
    ///
    /// Every training id in `mask` appears at every epoch; inactive samples
    /// get an empty loss and `active = 0`.
    pub fn write_csv(&self, mask: &NoiseMask, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["epoch", "sample_id", "loss", "is_noisy", "active"])
            .map_err(|e| Error::csv(path, e))?;
        for (e, rows) in self.epochs.iter().enumerate() {
            let by_id: std::collections::HashMap<usize, f64> = rows.iter().copied().collect();
            for (&id, &noisy) in mask.ids().iter().zip(mask.bits()) {
                let loss = by_id.get(&id);
                w.write_record([
                    (e + 1).to_string(),
                    id.to_string(),
                    loss.map(f64::to_string).unwrap_or_default(),
                    u8::from(noisy).to_string(),
                    u8::from(loss.is_some()).to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub epoch: usize,
    pub clean: Option<f64>,
    pub noisy: Option<f64>,
}

impl GroupMeans {
    /// `noisy − clean` when both groups are present.
    pub fn gap(&self) -> Option<f64> {
        Some(self.noisy? - self.clean?)
    }
}

/// Mean loss of clean and corrupted active samples at every epoch.
pub fn group_means(trajectory: &LossTrajectory, mask: &NoiseMask) -> Result<Vec<GroupMeans>> {
    trajectory
        .epochs
        .iter()
        .enumerate()
        .map(|(e, rows)| {
            let (mut clean, mut noisy) = ((0.0, 0usize), (0.0, 0usize));
            for &(id, loss) in rows {
                let group = match mask.is_corrupted(id) {
                    Some(true) => &mut noisy,
                    Some(false) => &mut clean,
                    None => {
                        return Err(Error::Usage(format!(
                            "sample {id} is not covered by the noise mask"
                        )))
                    }
                };
                group.0 += loss;
                group.1 += 1;
            }
            let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
            Ok(GroupMeans {
                epoch: e + 1,
                clean: mean(clean),
                noisy: mean(noisy),
            })
        })
        .collect()
}

pub fn write_group_means_csv(means: &[GroupMeans], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["epoch", "clean_mean", "noisy_mean"])
        .map_err(|e| Error::csv(path, e))?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in means {
        w.write_record([m.epoch.to_string(), cell(m.clean), cell(m.noisy)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Equal-width histogram normalised to unit area.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn occupied_bins(&self) -> usize {
        self.densities.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn area(&self) -> f64 {
        self.densities.iter().map(|d| d * self.width()).sum()
    }

    /// Writes `density_e{E}.csv`: `bin_left, bin_right, density`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["bin_left", "bin_right", "density"])
            .map_err(|e| Error::csv(path, e))?;
        for (i, d) in self.densities.iter().enumerate() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                d.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Histogram of values over `[min, max]`; the last bin is closed on the right.
///
/// When every value is equal the range is widened to one unit centred on it.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    if values.is_empty() {
        return Err(Error::Usage("cannot build a histogram of no values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();

    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let norm = values.len() as f64 * width;
    Ok(Histogram {
        edges,
        densities: counts.iter().map(|&c| c as f64 / norm).collect(),
    })
}

/// Density of the (optionally log1p-transformed) losses recorded at `epoch`.
pub fn loss_histogram(
    trajectory: &LossTrajectory,
    epoch: usize,
    bins: usize,
    transform: LossTransform,
) -> Result<Histogram> {
    let losses = trajectory
        .losses(epoch)
        .ok_or_else(|| Error::Usage(format!("epoch {epoch} has not been recorded")))?;
    let values: Vec<f64> = losses.into_iter().map(|l| transform.apply(l)).collect();
    histogram(&values, bins)
}
