//! Experiment orchestration: data, noise, training, trajectory recording,
//! adaptive dropping and evaluation, for one run or a grid of runs.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    self, HasId, JsonlOptions, LabelSet, SplitSizes, TaskData, TaskKind, TokenId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::learner::{
    classifier::ClassifierModel, per_sample_losses, predict, seq2seq::Seq2SeqModel, train_epoch,
    Checkpoint, Learner, TrainConfig,
};
use crate::metrics::{bleu4, detection_report, micro_f1, DetectionReport};
use crate::noise::{self, NoiseMask, NoiseMode};
use crate::scheduler::{
    active_samples, write_gmm_trace, DropPolicy, DropState, EpochDecision, LossTransform,
};
use crate::trajectory::{
    group_means, loss_histogram, write_group_means_csv, GroupMeans, LossTrajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DataSource {
    Synthetic,
    Jsonl {
        path: PathBuf,
        source_vocab: Option<PathBuf>,
        target_vocab: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub noise_rate: f64,
    pub seed: u64,
    pub mantra: bool,
    pub policy: DropPolicy,
    /// `train.epochs` is the run length.
    pub train: TrainConfig,
    pub data: DataSource,
    /// Split sizes of synthetic data.
    pub sizes: SplitSizes,
    /// Feature dimension of synthetic classification data.
    pub n_features: usize,
    pub noise_mode: NoiseMode,
    pub histogram_bins: usize,
    pub histogram_transform: LossTransform,
    /// Artifacts are written here when set. Not echoed into `results.json`.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// 700/85/88 intents, 16 features, 10 epochs, warmup 5.
    pub fn classification(seed: u64) -> Self {
        ExperimentConfig {
            task: TaskKind::Classification,
            noise_rate: 0.0,
            seed,
            mantra: false,
            policy: DropPolicy::classification(),
            train: TrainConfig::classification(),
            data: DataSource::Synthetic,
            sizes: SplitSizes::classification_default(),
            n_features: 16,
            noise_mode: NoiseMode::ReplaceSet,
            histogram_bins: 30,
            histogram_transform: LossTransform::Identity,
            out_dir: None,
        }
    }

    /// 1000/100/100 token sequences, 10 epochs, warmup 3.
    pub fn summarization(seed: u64) -> Self {
        ExperimentConfig {
            task: TaskKind::Summarization,
            policy: DropPolicy::summarization(),
            train: TrainConfig::summarization(),
            sizes: SplitSizes::summarization_default(),
            ..ExperimentConfig::classification(seed)
        }
    }

    pub fn for_task(task: TaskKind, seed: u64) -> Self {
        match task {
            TaskKind::Classification => Self::classification(seed),
            TaskKind::Summarization => Self::summarization(seed),
        }
    }

    pub fn epochs(&self) -> usize {
        self.train.epochs
    }

    pub fn with_noise(mut self, rate: f64) -> Self {
        self.noise_rate = rate;
        self
    }

    pub fn with_mantra(mut self, on: bool) -> Self {
        self.mantra = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise rate must lie in [0, 1], got {}",
                self.noise_rate
            )));
        }
        self.train.validate()?;
        self.policy.validate()?;
        if self.policy.warmup >= self.epochs() {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than the epoch count ({})",
                self.policy.warmup,
                self.epochs()
            )));
        }
        if self.histogram_bins < 2 {
            return Err(Error::Config("histogram needs at least 2 bins".into()));
        }
        Ok(())
    }

    fn metric_name(&self) -> &'static str {
        match self.task {
            TaskKind::Classification => "micro_f1",
            TaskKind::Summarization => "bleu4",
        }
    }
}

/// SplitMix64 step; separates the seed streams of data, noise and shuffling.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Headline results of one run, serialised as `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// `micro_f1` or `bleu4`.
    pub metric: String,
    /// Test-split metric in [0, 1].
    pub test_metric: f64,
    /// The same metric on a 0 to 100 scale.
    pub test_metric_percent: f64,
    pub validation_metrics: Vec<f64>,
    pub group_means: Vec<GroupMeans>,
    pub detection: DetectionReport,
    pub dropped_per_epoch: Vec<usize>,
    pub dropped_total: usize,
    pub corrupted: usize,
    /// Per-intent label-frequency change caused by noise (classification only).
    pub prior_drift: Option<Vec<f64>>,
    pub runtime_secs: f64,
}

impl RunReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialise")
    }
}

/// A finished run with the in-memory state behind its report.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: RunReport,
    pub trajectory: LossTrajectory,
    pub mask: NoiseMask,
    pub drop_state: DropState,
    pub decisions: Vec<EpochDecision>,
    pub held_out_ids: HashSet<usize>,
}

struct Prepared<L: Learner> {
    model: L,
    train: Vec<L::Sample>,
    validation: Vec<L::Sample>,
    test: Vec<L::Sample>,
    mask: NoiseMask,
    prior_drift: Option<Vec<f64>>,
}

struct LoopOutcome<L> {
    model: L,
    trajectory: LossTrajectory,
    drop_state: DropState,
    decisions: Vec<EpochDecision>,
    validation_metrics: Vec<f64>,
    dropped_per_epoch: Vec<usize>,
}

fn load_data(config: &ExperimentConfig) -> Result<TaskData> {
    match &config.data {
        DataSource::Synthetic => match config.task {
            TaskKind::Classification => {
                data::generate_classification_dataset(config.seed, config.sizes, config.n_features)
                    .map(TaskData::Classification)
            }
            TaskKind::Summarization => {
                data::generate_summarization_dataset(config.seed, config.sizes)
                    .map(TaskData::Summarization)
            }
        },
        DataSource::Jsonl {
            path,
            source_vocab,
            target_vocab,
        } => {
            let options = JsonlOptions {
                source: source_vocab
                    .as_ref()
                    .map(Vocabulary::from_file)
                    .transpose()?,
                target: target_vocab
                    .as_ref()
                    .map(Vocabulary::from_file)
                    .transpose()?,
            };
            data::load_jsonl(path, config.task, &options)
        }
    }
}

fn check_splits<S: HasId>(split: &data::DatasetSplit<S>) -> Result<()> {
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Config(
            "train, validation and test splits must all be non-empty".into(),
        ));
    }
    if !split.ids_disjoint() {
        return Err(Error::Config(
            "sample ids must be unique across splits".into(),
        ));
    }
    Ok(())
}

fn train_loop<L, F>(
    config: &ExperimentConfig,
    prepared: &Prepared<L>,
    evaluate: F,
) -> Result<LoopOutcome<L>>
where
    L: Learner,
    L::Sample: Clone,
    F: Fn(&L, &[L::Sample]) -> Result<f64>,
{
    let train_cfg = TrainConfig {
        shuffle_seed: derive_seed(config.seed, 2) ^ config.train.shuffle_seed,
        ..config.train
    };
    let mut model = prepared.model.clone();
    let mut trajectory = LossTrajectory::new();
    let mut state = DropState::new(prepared.train.iter().map(HasId::id).collect());
    let mut decisions = Vec::new();
    let mut validation_metrics = Vec::new();
    let mut dropped_per_epoch = Vec::new();

    let mut active = prepared.train.clone();
    for epoch in 1..=config.epochs() {
        model = train_epoch(&model, &active, &train_cfg, epoch)?;
        let losses = per_sample_losses(&model, &active)?;
        let ids: Vec<usize> = active.iter().map(HasId::id).collect();
        trajectory.record_epoch(epoch, &ids, &losses)?;

        let mut dropped_now = 0;
        if config.mantra {
            let rows = trajectory.epoch(epoch).expect("just recorded");
            let decision = state.evaluate_epoch(&config.policy, epoch, rows)?;
            dropped_now = decision.dropped.len();
            decisions.push(decision);
            if dropped_now > 0 {
                active = active_samples(&state, &prepared.train);
            }
        }
        dropped_per_epoch.push(dropped_now);
        validation_metrics.push(evaluate(&model, &prepared.validation)?);
    }

    Ok(LoopOutcome {
        model,
        trajectory,
        drop_state: state,
        decisions,
        validation_metrics,
        dropped_per_epoch,
    })
}

fn classification_f1(
    model: &ClassifierModel,
    samples: &[data::ClassificationSample],
) -> Result<f64> {
    let predicted = predict(model, samples)?;
    let gold: Vec<LabelSet> = samples.iter().map(|s| s.labels).collect();
    micro_f1(&gold, &predicted)
}

fn summarization_bleu(model: &Seq2SeqModel, samples: &[data::SummarizationSample]) -> Result<f64> {
    let candidates = predict(model, samples)?;
    let references: Vec<Vec<TokenId>> = samples.iter().map(|s| s.content().to_vec()).collect();
    bleu4(&candidates, &references)
}

/// Executes one run. Artifacts are written when `config.out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let started = Instant::now();
    let noise_seed = derive_seed(config.seed, 1);
    let init_seed = derive_seed(config.seed, 3);

    match load_data(config)? {
        TaskData::Classification(d) => {
            check_splits(&d.split)?;
            let (train, mask) = noise::inject_label_noise(
                &d.split.train,
                config.noise_rate,
                noise_seed,
                config.noise_mode,
            )?;
            let drift = noise::prior_drift(&d.split.train, &train).to_vec();
            let prepared = Prepared {
                model: ClassifierModel::random(d.n_features, config.train.init_scale, init_seed),
                train,
                validation: d.split.validation.clone(),
                test: d.split.test.clone(),
                mask,
                prior_drift: Some(drift),
            };
            let outcome = train_loop(config, &prepared, classification_f1)?;
            let test_metric = classification_f1(&outcome.model, &prepared.test)?;
            finish(config, prepared, outcome, test_metric, started)
        }
        TaskData::Summarization(d) => {
            check_splits(&d.split)?;
            let (train, mask) = noise::inject_summary_noise(
                &d.split.train,
                config.noise_rate,
                noise_seed,
                &d.vocab,
            )?;
            let prepared = Prepared {
                model: Seq2SeqModel::random(d.vocab, config.train.init_scale, init_seed),
                train,
                validation: d.split.validation.clone(),
                test: d.split.test.clone(),
                mask,
                prior_drift: None,
            };
            let outcome = train_loop(config, &prepared, summarization_bleu)?;
            let test_metric = summarization_bleu(&outcome.model, &prepared.test)?;
            finish(config, prepared, outcome, test_metric, started)
        }
    }
}

fn finish<L: Learner>(
    config: &ExperimentConfig,
    prepared: Prepared<L>,
    outcome: LoopOutcome<L>,
    test_metric: f64,
    started: Instant,
) -> Result<ExperimentRun> {
    let dropped_ids = outcome.drop_state.dropped_ids();
    let detection = detection_report(&dropped_ids, &prepared.mask)?;
    let held_out_ids: HashSet<usize> = prepared
        .validation
        .iter()
        .chain(&prepared.test)
        .map(HasId::id)
        .collect();

    let report = RunReport {
        config: config.clone(),
        metric: config.metric_name().to_owned(),
        test_metric,
        test_metric_percent: test_metric * 100.0,
        validation_metrics: outcome.validation_metrics,
        group_means: group_means(&outcome.trajectory, &prepared.mask)?,
        detection,
        dropped_per_epoch: outcome.dropped_per_epoch,
        dropped_total: dropped_ids.len(),
        corrupted: prepared.mask.corrupted_count(),
        prior_drift: prepared.prior_drift,
        runtime_secs: started.elapsed().as_secs_f64(),
    };
    let run = ExperimentRun {
        report,
        trajectory: outcome.trajectory,
        mask: prepared.mask,
        drop_state: outcome.drop_state,
        decisions: outcome.decisions,
        held_out_ids,
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(&run, &outcome.model, dir)?;
    }
    Ok(run)
}

fn write_artifacts<L: Learner>(run: &ExperimentRun, model: &L, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = &run.report.config;

    let results = dir.join("results.json");
    fs::write(&results, run.report.to_json()).map_err(|e| Error::io(&results, e))?;
    run.mask.write_csv(dir.join("noise_mask.csv"))?;
    run.trajectory
        .write_csv(&run.mask, dir.join("trajectory.csv"))?;
    write_group_means_csv(&run.report.group_means, dir.join("group_means.csv"))?;
    for epoch in 1..=run.trajectory.epochs_recorded() {
        loss_histogram(
            &run.trajectory,
            epoch,
            config.histogram_bins,
            config.histogram_transform,
        )?
        .write_csv(dir.join(format!("density_e{epoch}.csv")))?;
    }
    if config.mantra {
        write_gmm_trace(
            &run.decisions,
            config.policy.k_max,
            dir.join("gmm_trace.csv"),
        )?;
    }
    write_drops_csv(run, &dir.join("drops.csv"))?;
    Checkpoint::of(model).save(dir.join("model.ckpt.json"))
}

/// `drops.csv`: `epoch, sample_id, posterior, was_noisy`.
fn write_drops_csv(run: &ExperimentRun, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["epoch", "sample_id", "posterior", "was_noisy"])
        .map_err(|e| Error::csv(path, e))?;
    for r in run.drop_state.dropped() {
        let noisy = run.mask.is_corrupted(r.sample_id).unwrap_or(false);
        w.write_record([
            r.epoch.to_string(),
            r.sample_id.to_string(),
            r.posterior.to_string(),
            u8::from(noisy).to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Baseline versus noise-treated arm of the same cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: TaskKind,
    pub noise_rate: f64,
    pub seed: u64,
    pub metric: String,
    pub baseline_metric: f64,
    pub mantra_metric: f64,
    /// `mantra − baseline`.
    pub delta: f64,
    /// Test metric of the clean (0% noise, no dropping) reference, when given.
    pub clean_metric: Option<f64>,
    pub baseline_degradation: Option<f64>,
    pub mantra_degradation: Option<f64>,
    pub mantra_dropped: usize,
    pub mantra_detection: DetectionReport,
}

/// Compares two reports of the same task, seed and noise rate.
///
/// Degradations are measured against `clean` as `clean − arm`.
pub fn compare_runs(
    baseline: &RunReport,
    mantra: &RunReport,
    clean: Option<&RunReport>,
) -> Result<Comparison> {
    let (a, b) = (&baseline.config, &mantra.config);
    if a.task != b.task || a.seed != b.seed || a.noise_rate != b.noise_rate {
        return Err(Error::Usage(
            "compared runs must share task, seed and noise rate".into(),
        ));
    }
    if let Some(c) = clean {
        if c.config.task != a.task {
            return Err(Error::Usage(
                "clean reference is for a different task".into(),
            ));
        }
    }
    let clean_metric = clean.map(|c| c.test_metric);
    Ok(Comparison {
        task: a.task,
        noise_rate: a.noise_rate,
        seed: a.seed,
        metric: baseline.metric.clone(),
        baseline_metric: baseline.test_metric,
        mantra_metric: mantra.test_metric,
        delta: mantra.test_metric - baseline.test_metric,
        clean_metric,
        baseline_degradation: clean_metric.map(|c| c - baseline.test_metric),
        mantra_degradation: clean_metric.map(|c| c - mantra.test_metric),
        mantra_dropped: mantra.dropped_total,
        mantra_detection: mantra.detection.clone(),
    })
}

fn cell_dir(root: &Path, config: &ExperimentConfig) -> PathBuf {
    root.join(format!(
        "{}_r{}_s{}_{}",
        config.task.short_name(),
        config.noise_rate,
        config.seed,
        if config.mantra { "mantra" } else { "baseline" }
    ))
}

/// Runs every `rate × seed × {baseline, mantra}` cell in order.
///
/// With an output directory each cell writes into its own subdirectory and a
/// `summary.csv` (plus per-cell-group means in `summary_means.csv`) is written
/// at the root.
pub fn run_grid(base: &ExperimentConfig, rates: &[f64], seeds: &[u64]) -> Result<Vec<RunReport>> {
    if rates.is_empty() || seeds.is_empty() {
        return Err(Error::Usage(
            "grid needs at least one rate and one seed".into(),
        ));
    }
    let mut reports = Vec::with_capacity(rates.len() * seeds.len() * 2);
    for &rate in rates {
        for &seed in seeds {
            for mantra in [false, true] {
                let mut config = ExperimentConfig {
                    noise_rate: rate,
                    seed,
                    mantra,
                    ..base.clone()
                };
                config.out_dir = base.out_dir.as_ref().map(|root| cell_dir(root, &config));
                reports.push(run_experiment(&config)?.report);
            }
        }
    }
    if let Some(root) = &base.out_dir {
        write_summary(&reports, &root.join("summary.csv"))?;
        write_summary_means(&reports, &root.join("summary_means.csv"))?;
    }
    Ok(reports)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `summary.csv`: `task, rate, seed, mantra, test_metric, dropped, det_precision, det_recall`.
pub fn write_summary(reports: &[RunReport], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "task",
        "rate",
        "seed",
        "mantra",
        "test_metric",
        "dropped",
        "det_precision",
        "det_recall",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for r in reports {
        w.write_record([
            r.config.task.short_name().to_string(),
            r.config.noise_rate.to_string(),
            r.config.seed.to_string(),
            if r.config.mantra { "on" } else { "off" }.to_string(),
            r.test_metric.to_string(),
            r.dropped_total.to_string(),
            opt(r.detection.precision),
            opt(r.detection.recall),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean test metric and drop count per `(rate, mantra)` across seeds.
fn write_summary_means(reports: &[RunReport], path: &Path) -> Result<()> {
    let mut groups: Vec<((String, bool), Vec<&RunReport>)> = Vec::new();
    for r in reports {
        let key = (r.config.noise_rate.to_string(), r.config.mantra);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "task",
        "rate",
        "mantra",
        "runs",
        "mean_test_metric",
        "mean_dropped",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for ((rate, mantra), runs) in groups {
        let n = runs.len() as f64;
        w.write_record([
            runs[0].config.task.short_name().to_string(),
            rate,
            if mantra { "on" } else { "off" }.to_string(),
            runs.len().to_string(),
            (runs.iter().map(|r| r.test_metric).sum::<f64>() / n).to_string(),
            (runs.iter().map(|r| r.dropped_total as f64).sum::<f64>() / n).to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
