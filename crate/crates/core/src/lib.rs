//! Noise treatment for supervised training: inject controlled label noise,
//! track per-sample loss trajectories, detect corrupted samples with
//! BIC-selected Gaussian mixtures over losses, and drop them adaptively.
//!
//! The pipeline is split into modules that can be used on their own:
//!
//! * [`data`] generates seeded synthetic datasets and reads JSONL corpora.
//! * [`noise`] corrupts the training split and records the ground-truth mask.
//! * [`learner`] holds two small log-linear learners with closed-form gradients.
//! * [`trajectory`] stores per-sample losses per epoch.
//! * [`gmm`] fits univariate mixtures by EM and selects the component count by BIC.
//! * [`scheduler`] turns mixture posteriors into permanent sample drops.
//! * [`metrics`] scores predictions (micro-F1, BLEU-4) and detection quality.
//! * [`runner`] wires everything together and writes run artifacts.

pub mod data;
pub mod error;
pub mod gmm;
pub mod learner;
pub mod metrics;
pub mod noise;
pub mod runner;
pub mod scheduler;
pub mod trajectory;

pub use data::{
    ClassificationData, ClassificationSample, DatasetSplit, Intent, LabelSet, SummarizationData,
    SummarizationSample, TaskData, TaskKind, TokenId,
};
pub use error::{Error, Result};
pub use gmm::{bic, fit_em, posteriors, select_model, FitOptions, GmmModel, Responsibilities};
pub use learner::{classifier::ClassifierModel, seq2seq::Seq2SeqModel, Learner, TrainConfig};
pub use metrics::{bleu4, detection_report, micro_f1, DetectionReport};
pub use noise::{NoiseMask, NoiseMode};
pub use runner::{ExperimentConfig, RunReport};
pub use scheduler::{DropPolicy, DropState, LossTransform};
pub use trajectory::LossTrajectory;
