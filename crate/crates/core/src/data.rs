//! Datasets for the two tasks: multi-label intent classification and
//! token-level summarization.
//!
//! Synthetic generators are pure functions of their seed and sizes. External
//! corpora are read from JSONL, one record per line.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Source vocabulary size of the synthetic summarization task.
pub const SYNTH_SOURCE_VOCAB: usize = 40;
/// Content-token count of the synthetic target vocabulary (BOS and EOS come on top).
pub const SYNTH_CONTENT_VOCAB: usize = 40;
pub const SYNTH_MIN_LEN: usize = 4;
pub const SYNTH_MAX_LEN: usize = 10;
/// Each synthetic source token has this many seeded successors.
pub const SYNTH_BRANCHING: usize = 2;

/// The closed set of commit intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intent {
    Bug,
    Refactor,
    Deprecation,
    Feature,
    Merge,
    Resource,
    Test,
}

impl Intent {
    pub const COUNT: usize = 7;

    pub const ALL: [Intent; Intent::COUNT] = [
        Intent::Bug,
        Intent::Refactor,
        Intent::Deprecation,
        Intent::Feature,
        Intent::Merge,
        Intent::Resource,
        Intent::Test,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Intent> {
        Intent::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Intent::Bug => "Bug",
            Intent::Refactor => "Refactor",
            Intent::Deprecation => "Deprecation",
            Intent::Feature => "Feature",
            Intent::Merge => "Merge",
            Intent::Resource => "Resource",
            Intent::Test => "Test",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<Intent> {
        Intent::ALL
            .iter()
            .copied()
            .find(|i| i.name().eq_ignore_ascii_case(name.trim()))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of intents stored as a 7-bit mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const FULL: LabelSet = LabelSet((1 << Intent::COUNT) - 1);

    pub fn empty() -> Self {
        LabelSet(0)
    }

    pub fn from_bits(bits: u8) -> Self {
        LabelSet(bits & Self::FULL.0)
    }

    pub fn single(intent: Intent) -> Self {
        LabelSet(1 << intent.index())
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, intent: Intent) -> bool {
        self.0 & (1 << intent.index()) != 0
    }

    pub fn insert(&mut self, intent: Intent) {
        self.0 |= 1 << intent.index();
    }

    pub fn remove(&mut self, intent: Intent) {
        self.0 &= !(1 << intent.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Intent> {
        Intent::ALL.into_iter().filter(move |i| self.contains(*i))
    }

    /// Intents not in the set, in index order.
    pub fn complement(self) -> impl Iterator<Item = Intent> {
        Intent::ALL.into_iter().filter(move |i| !self.contains(*i))
    }

    /// 0/1 targets per intent, in index order.
    pub fn as_targets(self) -> [f64; Intent::COUNT] {
        let mut out = [0.0; Intent::COUNT];
        for intent in self.iter() {
            out[intent.index()] = 1.0;
        }
        out
    }
}

impl FromIterator<Intent> for LabelSet {
    fn from_iter<T: IntoIterator<Item = Intent>>(iter: T) -> Self {
        let mut set = LabelSet::empty();
        for intent in iter {
            set.insert(intent);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSample {
    pub id: usize,
    pub features: Vec<f64>,
    pub labels: LabelSet,
}

/// A source/target token pair. `target` ends with the EOS token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarizationSample {
    pub id: usize,
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

impl SummarizationSample {
    /// Target tokens without the trailing EOS.
    pub fn content(&self) -> &[TokenId] {
        match self.target.split_last() {
            Some((_, rest)) => rest,
            None => &[],
        }
    }
}

/// Anything with a stable sample id.
pub trait HasId {
    fn id(&self) -> usize;
}

impl HasId for ClassificationSample {
    fn id(&self) -> usize {
        self.id
    }
}

impl HasId for SummarizationSample {
    fn id(&self) -> usize {
        self.id
    }
}

/// Vocabulary layout for summarization: target ids `0..content` are content
/// tokens, followed by BOS and EOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqVocab {
    pub source_size: usize,
    pub content_size: usize,
}

impl SeqVocab {
    pub fn synthetic() -> Self {
        SeqVocab {
            source_size: SYNTH_SOURCE_VOCAB,
            content_size: SYNTH_CONTENT_VOCAB,
        }
    }

    pub fn bos(&self) -> TokenId {
        self.content_size as TokenId
    }

    pub fn eos(&self) -> TokenId {
        self.content_size as TokenId + 1
    }

    pub fn target_size(&self) -> usize {
        self.content_size + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, validation: usize, test: usize) -> Self {
        SplitSizes {
            train,
            validation,
            test,
        }
    }

    /// 700/85/88, the commit-intent split shape.
    pub fn classification_default() -> Self {
        SplitSizes::new(700, 85, 88)
    }

    pub fn summarization_default() -> Self {
        SplitSizes::new(1000, 100, 100)
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 || self.validation == 0 || self.test == 0 {
            return Err(Error::Config(format!(
                "split sizes must be positive, got {}/{}/{}",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<S> {
    pub train: Vec<S>,
    pub validation: Vec<S>,
    pub test: Vec<S>,
    /// Generator seed; `None` for ingested corpora.
    pub seed: Option<u64>,
}

impl<S: HasId> DatasetSplit<S> {
    pub fn train_ids(&self) -> Vec<usize> {
        self.train.iter().map(HasId::id).collect()
    }

    pub fn held_out_ids(&self) -> HashSet<usize> {
        self.validation
            .iter()
            .chain(&self.test)
            .map(HasId::id)
            .collect()
    }

    /// True when no id appears in more than one split (or twice in one).
    pub fn ids_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .all(|s| seen.insert(s.id()))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationData {
    pub split: DatasetSplit<ClassificationSample>,
    pub n_features: usize,
    /// Row-major 7×d generator weights, when synthetic.
    pub true_weights: Option<Vec<f64>>,
    /// Samples whose label set was empty under the thresholds and got the argmax label.
    pub repairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizationData {
    pub split: DatasetSplit<SummarizationSample>,
    pub vocab: SeqVocab,
    /// Source token → target content token, when synthetic.
    pub dictionary: Option<Vec<TokenId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Summarization,
}

impl TaskKind {
    pub fn short_name(self) -> &'static str {
        match self {
            TaskKind::Classification => "cls",
            TaskKind::Summarization => "sum",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" | "classification" => Ok(TaskKind::Classification),
            "sum" | "summarization" => Ok(TaskKind::Summarization),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    Classification(ClassificationData),
    Summarization(SummarizationData),
}

impl TaskData {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskData::Classification(_) => TaskKind::Classification,
            TaskData::Summarization(_) => TaskKind::Summarization,
        }
    }
}

/// Generates a seeded multi-label dataset from hidden linear thresholds.
///
/// Features are standard normal. A hidden weight matrix with entries uniform
/// in [-1, 1] assigns intent `l` iff `w_l · x > 0`; a sample with no positive
/// intent gets its argmax-score intent instead.
pub fn generate_classification_dataset(
    seed: u64,
    sizes: SplitSizes,
    n_features: usize,
) -> Result<ClassificationData> {
    sizes.validate()?;
    if n_features < 2 {
        return Err(Error::Config(format!(
            "feature dimension must be at least 2, got {n_features}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..Intent::COUNT * n_features)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();

    let mut repairs = 0;
    let mut make = |id: usize, rng: &mut ChaCha8Rng| {
        let features: Vec<f64> = (0..n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let scores: Vec<f64> = weights
            .chunks_exact(n_features)
            .map(|w| dot(w, &features))
            .collect();
        let mut labels: LabelSet = Intent::ALL
            .into_iter()
            .filter(|i| scores[i.index()] > 0.0)
            .collect();
        if labels.is_empty() {
            repairs += 1;
            labels = LabelSet::single(Intent::from_index(argmax(&scores)).expect("7 scores"));
        }
        ClassificationSample {
            id,
            features,
            labels,
        }
    };

    let mut id = 0;
    let mut take = |n: usize, rng: &mut ChaCha8Rng| {
        let out: Vec<_> = (id..id + n).map(|i| make(i, rng)).collect();
        id += n;
        out
    };
    let train = take(sizes.train, &mut rng);
    let validation = take(sizes.validation, &mut rng);
    let test = take(sizes.test, &mut rng);

    Ok(ClassificationData {
        split: DatasetSplit {
            train,
            validation,
            test,
            seed: Some(seed),
        },
        n_features,
        true_weights: Some(weights),
        repairs,
    })
}

/// Generates a seeded token-translation dataset.
///
/// A seeded dictionary maps each source token to a target content token (not
/// necessarily injective). Each source has a uniform length in
/// `SYNTH_MIN_LEN..=SYNTH_MAX_LEN`; its target is the tokenwise image under
/// the dictionary followed by EOS.
pub fn generate_summarization_dataset(seed: u64, sizes: SplitSizes) -> Result<SummarizationData> {
    sizes.validate()?;
    let vocab = SeqVocab::synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dictionary: Vec<TokenId> = (0..vocab.source_size)
        .map(|_| rng.random_range(0..vocab.content_size as TokenId))
        .collect();

    let successors: Vec<[TokenId; SYNTH_BRANCHING]> = (0..vocab.source_size)
        .map(|_| std::array::from_fn(|_| rng.random_range(0..vocab.source_size as TokenId)))
        .collect();

    let make = |id: usize, rng: &mut ChaCha8Rng| {
        let len = rng.random_range(SYNTH_MIN_LEN..=SYNTH_MAX_LEN);
        let mut source: Vec<TokenId> = Vec::with_capacity(len);
        source.push(rng.random_range(0..vocab.source_size as TokenId));
        while source.len() < len {
            let prev = *source.last().expect("non-empty") as usize;
            source.push(successors[prev][rng.random_range(0..SYNTH_BRANCHING)]);
        }
        let mut target: Vec<TokenId> = source.iter().map(|&t| dictionary[t as usize]).collect();
        target.push(vocab.eos());
        SummarizationSample { id, source, target }
    };

    let mut id = 0;
    let mut take = |n: usize, rng: &mut ChaCha8Rng| {
        let out: Vec<_> = (id..id + n).map(|i| make(i, rng)).collect();
        id += n;
        out
    };
    let train = take(sizes.train, &mut rng);
    let validation = take(sizes.validation, &mut rng);
    let test = take(sizes.test, &mut rng);

    Ok(SummarizationData {
        split: DatasetSplit {
            train,
            validation,
            test,
            seed: Some(seed),
        },
        vocab,
        dictionary: Some(dictionary),
    })
}

/// Token-per-line vocabulary; a token's id is its zero-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Vocabulary::new(text.lines().map(str::to_owned).collect()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }
}

/// Vocabularies used to map string fields of JSONL records.
///
/// For classification `source` maps `text` to bag-of-words features (unknown
/// words are ignored). For summarization `source`/`target` map string
/// sequences to ids and also fix the vocabulary sizes.
#[derive(Debug, Clone, Default)]
pub struct JsonlOptions {
    pub source: Option<Vocabulary>,
    pub target: Option<Vocabulary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum TokensOrText {
    Ids(Vec<TokenId>),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassificationRecord {
    id: Option<usize>,
    features: Option<Vec<f64>>,
    text: Option<String>,
    labels: Vec<String>,
    split: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSummarizationRecord {
    id: Option<usize>,
    source: TokensOrText,
    target: TokensOrText,
    split: String,
}

fn parse_split(raw: &str, line: usize) -> Result<SplitName> {
    match raw {
        "train" => Ok(SplitName::Train),
        "val" | "validation" => Ok(SplitName::Val),
        "test" => Ok(SplitName::Test),
        other => Err(Error::Schema {
            line,
            message: format!("unknown split {other:?}"),
        }),
    }
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

struct IdAssigner {
    next: usize,
    seen: HashSet<usize>,
}

impl IdAssigner {
    fn new() -> Self {
        IdAssigner {
            next: 0,
            seen: HashSet::new(),
        }
    }

    fn assign(&mut self, explicit: Option<usize>, line: usize) -> Result<usize> {
        let id = explicit.unwrap_or(self.next);
        self.next += 1;
        if !self.seen.insert(id) {
            return Err(Error::Schema {
                line,
                message: format!("duplicate id {id}"),
            });
        }
        Ok(id)
    }
}

fn push_split<S>(split: &mut DatasetSplit<S>, which: SplitName, sample: S) {
    match which {
        SplitName::Train => split.train.push(sample),
        SplitName::Val => split.validation.push(sample),
        SplitName::Test => split.test.push(sample),
    }
}

fn empty_split<S>() -> DatasetSplit<S> {
    DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed: None,
    }
}

/// Reads a JSONL corpus. Ids follow file order unless a record carries one.
pub fn load_jsonl(
    path: impl AsRef<Path>,
    kind: TaskKind,
    options: &JsonlOptions,
) -> Result<TaskData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match kind {
        TaskKind::Classification => {
            parse_classification(&text, options).map(TaskData::Classification)
        }
        TaskKind::Summarization => parse_summarization(&text, options).map(TaskData::Summarization),
    }
}

fn parse_classification(text: &str, options: &JsonlOptions) -> Result<ClassificationData> {
    let mut split = empty_split();
    let mut ids = IdAssigner::new();
    let mut n_features: Option<usize> = None;

    for (line, raw) in numbered_lines(text) {
        let record: RawClassificationRecord =
            serde_json::from_str(raw).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let schema = |message: String| Error::Schema { line, message };

        let features = match (record.features, record.text) {
            (Some(f), None) => f,
            (None, Some(t)) => {
                let vocab = options
                    .source
                    .as_ref()
                    .ok_or_else(|| schema("\"text\" requires a vocabulary file".into()))?;
                let mut bag = vec![0.0; vocab.len()];
                for token in t.split_whitespace() {
                    if let Some(id) = vocab.get(token) {
                        bag[id as usize] += 1.0;
                    }
                }
                bag
            }
            _ => {
                return Err(schema(
                    "exactly one of \"features\" or \"text\" is required".into(),
                ))
            }
        };
        if features.is_empty() || features.iter().any(|v| !v.is_finite()) {
            return Err(schema(
                "features must be a non-empty vector of finite numbers".into(),
            ));
        }
        match n_features {
            None => n_features = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(schema(format!(
                    "feature dimension {} differs from {d}",
                    features.len()
                )))
            }
            _ => {}
        }

        let mut labels = LabelSet::empty();
        for name in &record.labels {
            let intent = Intent::from_name(name)
                .ok_or_else(|| schema(format!("unknown intent {name:?}")))?;
            labels.insert(intent);
        }
        if labels.is_empty() {
            return Err(schema("at least one label is required".into()));
        }
        let which = parse_split(&record.split, line)?;
        let id = ids.assign(record.id, line)?;
        push_split(
            &mut split,
            which,
            ClassificationSample {
                id,
                features,
                labels,
            },
        );
    }

    Ok(ClassificationData {
        split,
        n_features: n_features.unwrap_or(0),
        true_weights: None,
        repairs: 0,
    })
}

fn map_tokens(
    field: TokensOrText,
    vocab: Option<&Vocabulary>,
    name: &str,
    line: usize,
) -> Result<Vec<TokenId>> {
    match field {
        TokensOrText::Ids(ids) => Ok(ids),
        TokensOrText::Text(text) => {
            let vocab = vocab.ok_or_else(|| Error::Schema {
                line,
                message: format!("string {name} requires a vocabulary file"),
            })?;
            text.split_whitespace()
                .map(|tok| {
                    vocab.get(tok).ok_or_else(|| Error::Schema {
                        line,
                        message: format!("{name} token {tok:?} not in vocabulary"),
                    })
                })
                .collect()
        }
    }
}

fn parse_summarization(text: &str, options: &JsonlOptions) -> Result<SummarizationData> {
    let mut split = empty_split();
    let mut ids = IdAssigner::new();
    let mut max_source = 0usize;
    let mut max_target = 0usize;
    let mut raw_samples = Vec::new();

    for (line, raw) in numbered_lines(text) {
        let record: RawSummarizationRecord =
            serde_json::from_str(raw).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let source = map_tokens(record.source, options.source.as_ref(), "source", line)?;
        let target = map_tokens(record.target, options.target.as_ref(), "target", line)?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::Schema {
                line,
                message: "source and target must be non-empty".into(),
            });
        }
        max_source = max_source.max(*source.iter().max().expect("non-empty") as usize + 1);
        max_target = max_target.max(*target.iter().max().expect("non-empty") as usize + 1);
        let which = parse_split(&record.split, line)?;
        let id = ids.assign(record.id, line)?;
        raw_samples.push((line, which, id, source, target));
    }

    let source_size = options.source.as_ref().map_or(max_source, Vocabulary::len);
    let content_size = options.target.as_ref().map_or(max_target, Vocabulary::len);
    let vocab = SeqVocab {
        source_size,
        content_size,
    };
    for (line, which, id, source, mut target) in raw_samples {
        if source.iter().any(|&t| t as usize >= source_size)
            || target.iter().any(|&t| t as usize >= content_size)
        {
            return Err(Error::Schema {
                line,
                message: "token id outside vocabulary".into(),
            });
        }
        target.push(vocab.eos());
        push_split(
            &mut split,
            which,
            SummarizationSample { id, source, target },
        );
    }

    Ok(SummarizationData {
        split,
        vocab,
        dictionary: None,
    })
}

#[derive(Serialize)]
struct ClassificationRecordOut<'a> {
    id: usize,
    features: &'a [f64],
    labels: Vec<&'static str>,
    split: SplitName,
}

#[derive(Serialize)]
struct SummarizationRecordOut<'a> {
    id: usize,
    source: &'a [TokenId],
    target: &'a [TokenId],
    split: SplitName,
}

/// Writes a dataset in the JSONL record format read by [`load_jsonl`].
pub fn write_jsonl(path: impl AsRef<Path>, data: &TaskData) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = |value: serde_json::Result<String>| -> Result<()> {
        let line = value.map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))
    };

    match data {
        TaskData::Classification(d) => {
            for (which, samples) in tagged(&d.split) {
                for s in samples {
                    emit(serde_json::to_string(&ClassificationRecordOut {
                        id: s.id,
                        features: &s.features,
                        labels: s.labels.iter().map(Intent::name).collect(),
                        split: which,
                    }))?;
                }
            }
        }
        TaskData::Summarization(d) => {
            for (which, samples) in tagged(&d.split) {
                for s in samples {
                    emit(serde_json::to_string(&SummarizationRecordOut {
                        id: s.id,
                        source: &s.source,
                        target: s.content(),
                        split: which,
                    }))?;
                }
            }
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn tagged<S>(split: &DatasetSplit<S>) -> [(SplitName, &[S]); 3] {
    [
        (SplitName::Train, &split.train),
        (SplitName::Val, &split.validation),
        (SplitName::Test, &split.test),
    ]
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_sizes() {
        let data =
            generate_classification_dataset(1, SplitSizes::classification_default(), 16).unwrap();
        assert_eq!(data.split.train.len(), 700);
        assert_eq!(data.split.validation.len(), 85);
        assert_eq!(data.split.test.len(), 88);
        assert!(data.split.ids_disjoint());
        assert_eq!(data.split.len(), 873);
    }

    #[test]
    fn classification_is_deterministic() {
        let a = generate_classification_dataset(5, SplitSizes::new(50, 10, 10), 8).unwrap();
        let b = generate_classification_dataset(5, SplitSizes::new(50, 10, 10), 8).unwrap();
        assert_eq!(a, b);
        let c = generate_classification_dataset(6, SplitSizes::new(50, 10, 10), 8).unwrap();
        assert_ne!(a.split.train, c.split.train);
    }

    #[test]
    fn every_sample_has_a_label_and_matches_thresholds() {
        let data = generate_classification_dataset(1, SplitSizes::new(200, 10, 10), 16).unwrap();
        let w = data.true_weights.as_ref().unwrap();
        let mut repaired = 0;
        for s in data
            .split
            .train
            .iter()
            .chain(&data.split.validation)
            .chain(&data.split.test)
        {
            assert!(!s.labels.is_empty());
            assert_eq!(s.features.len(), 16);
            let thresholded: LabelSet = Intent::ALL
                .into_iter()
                .filter(|i| dot(&w[i.index() * 16..(i.index() + 1) * 16], &s.features) > 0.0)
                .collect();
            if thresholded.is_empty() {
                repaired += 1;
                assert_eq!(s.labels.len(), 1);
            } else {
                assert_eq!(thresholded, s.labels);
            }
        }
        assert_eq!(repaired, data.repairs);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(matches!(
            generate_classification_dataset(1, SplitSizes::new(0, 1, 1), 16),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_classification_dataset(1, SplitSizes::new(1, 1, 1), 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_summarization_dataset(1, SplitSizes::new(1, 0, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn summaries_follow_dictionary() {
        let data = generate_summarization_dataset(7, SplitSizes::new(1000, 10, 10)).unwrap();
        let dict = data.dictionary.as_ref().unwrap();
        assert_eq!(data.vocab.target_size(), 42);
        for s in &data.split.train {
            assert!((SYNTH_MIN_LEN..=SYNTH_MAX_LEN).contains(&s.source.len()));
            assert_eq!(s.content().len(), s.source.len());
            assert_eq!(*s.target.last().unwrap(), data.vocab.eos());
            for (k, &src) in s.source.iter().enumerate() {
                assert!((src as usize) < data.vocab.source_size);
                assert_eq!(s.target[k], dict[src as usize]);
            }
        }
        let again = generate_summarization_dataset(7, SplitSizes::new(1000, 10, 10)).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn intent_names_round_trip() {
        for intent in Intent::ALL {
            assert_eq!(Intent::from_name(intent.name()), Some(intent));
        }
        assert_eq!(Intent::from_name("bug"), Some(Intent::Bug));
        assert_eq!(Intent::from_name("Docs"), None);
    }

    #[test]
    fn label_set_complement() {
        let set: LabelSet = [Intent::Bug, Intent::Test].into_iter().collect();
        assert_eq!(set.len(), 2);
        assert_eq!(set.complement().count(), 5);
        assert!(set.complement().all(|i| !set.contains(i)));
        assert_eq!(LabelSet::FULL.complement().count(), 0);
    }
}
