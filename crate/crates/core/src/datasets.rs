//! Dataset ingestion, incremental scenario construction, synthetic streams
//! and segment-shuffle augmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// One feature vector with its dense class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    dim: usize,
    class_count: usize,
    samples: Vec<Sample>,
    /// `raw_labels[id]` is the label as it appeared in the source file.
    raw_labels: Vec<i64>,
}

impl LabeledDataset {
    /// Builds a dataset whose raw labels are the dense ids themselves.
    pub fn new(dim: usize, class_count: usize, samples: Vec<Sample>) -> Result<Self> {
        let raw_labels = (0..class_count as i64).collect();
        Self::with_raw_labels(dim, class_count, samples, raw_labels)
    }

    pub fn with_raw_labels(
        dim: usize,
        class_count: usize,
        samples: Vec<Sample>,
        raw_labels: Vec<i64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dataset dimension must be positive".into()));
        }
        if class_count == 0 {
            return Err(Error::Data("dataset must declare at least one class".into()));
        }
        if raw_labels.len() != class_count {
            return Err(Error::Data(format!(
                "label mapping has {} entries for {} classes",
                raw_labels.len(),
                class_count
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Data(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if let Some(c) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i} feature {c} is not finite")));
            }
            if s.label >= class_count {
                return Err(Error::Data(format!(
                    "sample {i} has label {} outside 0..{class_count}",
                    s.label
                )));
            }
        }
        Ok(Self {
            dim,
            class_count,
            samples,
            raw_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn raw_labels(&self) -> &[i64] {
        &self.raw_labels
    }

    /// Raw label of the class that became dense id `id`.
    pub fn raw_label(&self, id: usize) -> Option<i64> {
        self.raw_labels.get(id).copied()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Per-feature z-scoring over the whole dataset. Constant features are
    /// centred but not scaled.
    pub fn standardized(&self) -> LabeledDataset {
        let n = self.samples.len().max(1) as f64;
        let mut mean = vec![0.0; self.dim];
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(&s.features) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for s in &self.samples {
            for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
                *acc += (v - m) * (v - m) / n;
            }
        }
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let features = s
                    .features
                    .iter()
                    .zip(mean.iter().zip(&var))
                    .map(|(v, (m, var))| {
                        let sd = var.sqrt();
                        if sd > 0.0 {
                            (v - m) / sd
                        } else {
                            v - m
                        }
                    })
                    .collect();
                Sample::new(features, s.label)
            })
            .collect();
        LabeledDataset {
            samples,
            ..self.clone()
        }
    }
}

/// Which CSV column carries the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Name(n) => write!(f, "{n:?}"),
        }
    }
}

/// Reads a headered CSV of real-valued features plus one integer label
/// column. Raw labels are remapped to dense ids in ascending order, so the
/// smallest raw label (conventionally the normal class) becomes class 0.
pub fn load_csv_dataset(path: &Path, label_column: &LabelColumn) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let width = headers.len();
    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Data(format!(
                "{}: label column index {i} out of range ({width} columns)",
                path.display()
            )))
        }
        LabelColumn::Name(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "{}: no label column named {name:?} in header",
                path.display()
            ))
        })?,
    };
    if width < 2 {
        return Err(Error::Data(format!(
            "{}: need at least one feature column besides the label",
            path.display()
        )));
    }

    let mut rows: Vec<(Vec<f64>, i64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Data(format!(
                "{}: row at line {line} has {} fields, header has {width}",
                path.display(),
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(width - 1);
        let mut label = 0i64;
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                label = cell.parse::<i64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: line {line}, column {} ({}): label {cell:?} is not an integer",
                        path.display(),
                        col + 1,
                        &headers[col]
                    ))
                })?;
            } else {
                let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Data(format!(
                        "{}: line {line}, column {} ({}): {cell:?} is not a finite number",
                        path.display(),
                        col + 1,
                        &headers[col]
                    ))
                })?;
                features.push(v);
            }
        }
        rows.push((features, label));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: dataset has no rows", path.display())));
    }

    let mut raw_labels: Vec<i64> = rows.iter().map(|(_, l)| *l).collect();
    raw_labels.sort_unstable();
    raw_labels.dedup();
    let samples = rows
        .into_iter()
        .map(|(features, raw)| {
            let id = raw_labels.binary_search(&raw).expect("label collected above");
            Sample::new(features, id)
        })
        .collect();
    LabeledDataset::with_raw_labels(width - 1, raw_labels.len(), samples, raw_labels)
}

/// Writes `f0..f{D-1},label` with shortest round-trip float formatting, so
/// [`load_csv_dataset`] recovers the values bit for bit.
pub fn write_csv_dataset(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        let header: Vec<String> = (0..dataset.dim).map(|i| format!("f{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for s in &dataset.samples {
            for v in &s.features {
                write!(out, "{v:?},")?;
            }
            writeln!(out, "{}", dataset.raw_labels[s.label])?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub base_classes: Vec<usize>,
    pub novel_per_session: usize,
    pub sessions: usize,
    pub normal_train_count: usize,
    pub fault_train_count: usize,
    pub test_per_class: usize,
    pub memory_k: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn classes_required(&self) -> usize {
        self.base_classes.len() + self.novel_per_session * self.sessions.saturating_sub(1)
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_classes.is_empty() {
            return bad("scenario.base_classes must not be empty".into());
        }
        if self.sessions == 0 {
            return bad("scenario.sessions must be positive".into());
        }
        if self.sessions > 1 && self.novel_per_session == 0 {
            return bad("scenario.novel_per_session must be positive".into());
        }
        if self.normal_train_count == 0 || self.fault_train_count == 0 {
            return bad("scenario train counts must be positive".into());
        }
        if self.test_per_class == 0 {
            return bad("scenario.test_per_class must be positive".into());
        }
        if self.memory_k == 0 {
            return bad("scenario.memory_k must be positive".into());
        }
        if self.fault_train_count > self.normal_train_count {
            return bad(format!(
                "scenario.fault_train_count ({}) exceeds normal_train_count ({})",
                self.fault_train_count, self.normal_train_count
            ));
        }
        let mut seen = vec![false; class_count];
        for &c in &self.base_classes {
            if c >= class_count {
                return bad(format!(
                    "scenario.base_classes: class {c} not in dataset with {class_count} classes"
                ));
            }
            if std::mem::replace(&mut seen[c], true) {
                return bad(format!("scenario.base_classes: class {c} listed twice"));
            }
        }
        if self.classes_required() > class_count {
            return bad(format!(
                "scenario needs {} classes ({} base + {} x {} novel) but dataset has {class_count}",
                self.classes_required(),
                self.base_classes.len(),
                self.novel_per_session,
                self.sessions - 1
            ));
        }
        Ok(())
    }
}

/// Named scenario shapes from the benchmark protocol, applied to whatever
/// dataset is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TepImbalanced,
    TepLongtail,
    #[serde(rename = "mff-longtail-1")]
    MffLongtail1,
    #[serde(rename = "mff-longtail-2")]
    MffLongtail2,
    Synth,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::TepImbalanced,
        Preset::TepLongtail,
        Preset::MffLongtail1,
        Preset::MffLongtail2,
        Preset::Synth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TepImbalanced => "tep-imbalanced",
            Preset::TepLongtail => "tep-longtail",
            Preset::MffLongtail1 => "mff-longtail-1",
            Preset::MffLongtail2 => "mff-longtail-2",
            Preset::Synth => "synth",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown scenario preset {name:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }

    /// Total classes the preset expects in its dataset.
    pub fn class_count(self) -> usize {
        match self {
            Preset::TepImbalanced | Preset::TepLongtail => 10,
            Preset::MffLongtail1 | Preset::MffLongtail2 => 5,
            Preset::Synth => 6,
        }
    }

    pub fn scenario(self, seed: u64) -> ScenarioConfig {
        let (base, novel, sessions, normal, fault, test, k) = match self {
            Preset::TepImbalanced => (vec![0, 1], 2, 5, 500, 48, 800, 100),
            Preset::TepLongtail => (vec![0, 1], 2, 5, 500, 20, 800, 40),
            Preset::MffLongtail1 => (vec![0], 1, 5, 200, 10, 800, 10),
            Preset::MffLongtail2 => (vec![0], 1, 5, 200, 5, 800, 5),
            Preset::Synth => (vec![0, 1], 2, 3, 100, 5, 100, 12),
        };
        ScenarioConfig {
            base_classes: base,
            novel_per_session: novel,
            sessions,
            normal_train_count: normal,
            fault_train_count: fault,
            test_per_class: test,
            memory_k: k,
            seed,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A class that could not supply the configured number of samples; the
/// builder took everything available instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub class: usize,
    pub split: Split,
    pub requested: usize,
    pub taken: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionData {
    /// Classes introduced in this session, in schedule order.
    pub classes: Vec<usize>,
    pub train: BTreeMap<usize, Vec<Sample>>,
}

impl SessionData {
    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> {
        self.classes.iter().flat_map(|c| self.train[c].iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub scenario: ScenarioConfig,
    pub dim: usize,
    pub sessions: Vec<SessionData>,
    /// Held-out samples per class, disjoint from every training subset.
    pub test: BTreeMap<usize, Vec<Sample>>,
    pub shortfalls: Vec<Shortfall>,
}

impl SessionPlan {
    /// Classes introduced in sessions `0..=session` (zero-based).
    pub fn classes_through(&self, session: usize) -> Vec<usize> {
        self.sessions[..=session]
            .iter()
            .flat_map(|s| s.classes.iter().copied())
            .collect()
    }

    /// The cumulative test set for the given seen classes.
    pub fn test_for(&self, classes: &[usize]) -> Vec<Sample> {
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        sorted
            .iter()
            .flat_map(|c| self.test.get(c).into_iter().flatten().cloned())
            .collect()
    }
}

/// Splits `dataset` into the incremental schedule described by `config`.
///
/// Session 1 holds `base_classes`; every later session takes the next
/// `novel_per_session` unused classes in ascending id order. Class 0 (normal)
/// gets `normal_train_count` training samples, every fault class
/// `fault_train_count`; each class then contributes up to `test_per_class`
/// disjoint test samples. The per-class shuffle is seeded by
/// `(config.seed, class)`.
pub fn build_scenario(dataset: &LabeledDataset, config: &ScenarioConfig) -> Result<SessionPlan> {
    config.validate(dataset.class_count())?;

    let mut schedule = vec![config.base_classes.clone()];
    let mut rest = (0..dataset.class_count()).filter(|c| !config.base_classes.contains(c));
    for _ in 1..config.sessions {
        let classes: Vec<usize> = rest.by_ref().take(config.novel_per_session).collect();
        schedule.push(classes);
    }

    let mut by_class: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
    for s in dataset.samples() {
        by_class.entry(s.label).or_default().push(s);
    }

    let mut sessions = Vec::with_capacity(schedule.len());
    let mut test = BTreeMap::new();
    let mut shortfalls = Vec::new();
    for classes in schedule {
        let mut train = BTreeMap::new();
        for &class in &classes {
            let wanted = if class == 0 {
                config.normal_train_count
            } else {
                config.fault_train_count
            };
            let pool = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
            if pool.is_empty() {
                return Err(Error::Data(format!(
                    "class {class} has no samples; scenario needs {} for training and {} for testing",
                    wanted, config.test_per_class
                )));
            }
            let mut order: Vec<usize> = (0..pool.len()).collect();
            let mut rng = rng::stream(rng::derive_seed(config.seed, class as u64), streams::SCENARIO);
            order.shuffle(&mut rng);

            let n_train = wanted.min(pool.len());
            let n_test = config.test_per_class.min(pool.len() - n_train);
            if n_train < wanted {
                shortfalls.push(Shortfall {
                    class,
                    split: Split::Train,
                    requested: wanted,
                    taken: n_train,
                });
            }
            if n_test < config.test_per_class {
                shortfalls.push(Shortfall {
                    class,
                    split: Split::Test,
                    requested: config.test_per_class,
                    taken: n_test,
                });
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| pool[i].clone()).collect::<Vec<_>>();
            train.insert(class, pick(&order[..n_train]));
            test.insert(class, pick(&order[n_train..n_train + n_test]));
        }
        sessions.push(SessionData { classes, train });
    }

    Ok(SessionPlan {
        scenario: config.clone(),
        dim: dataset.dim(),
        sessions,
        test,
        shortfalls,
    })
}

/// Uniformly permutes `features[start..end]` in place.
pub fn shuffle_segment<R: Rng + ?Sized>(features: &mut [f64], start: usize, end: usize, rng: &mut R) {
    features[start..end].shuffle(rng);
}

/// Draws a segment `[i, j)` uniformly from all `D(D+1)/2` non-empty
/// contiguous segments and shuffles it; the label is kept.
pub fn augment_segment_shuffle<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Sample {
    let d = sample.features.len();
    let mut features = sample.features.clone();
    if d > 1 {
        let (start, end) = segment_from_index(d, rng.random_range(0..d * (d + 1) / 2));
        shuffle_segment(&mut features, start, end, rng);
    }
    Sample::new(features, sample.label)
}

/// Maps `k in 0..D(D+1)/2` onto the `k`-th segment `[i, j)` enumerated by
/// start then end.
fn segment_from_index(d: usize, mut k: usize) -> (usize, usize) {
    for start in 0..d {
        let count = d - start;
        if k < count {
            return (start, start + 1 + k);
        }
        k -= count;
    }
    unreachable!("segment index out of range")
}

/// Two augmented views per source sample, pairs adjacent: source `k` yields
/// outputs `2k` and `2k + 1`.
pub fn make_augmented_batch<R: Rng + ?Sized>(samples: &[Sample], rng: &mut R) -> Result<Vec<Sample>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot augment an empty batch".into()));
    }
    let mut out = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        out.push(augment_segment_shuffle(s, rng));
        out.push(augment_segment_shuffle(s, rng));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub class_count: usize,
    pub dim: usize,
    pub means_scale: f64,
    pub noise_sigma: f64,
    /// Samples per class; length must equal `class_count`.
    pub counts: Vec<usize>,
    pub seed: u64,
}

/// Isotropic Gaussian classes around seeded random means of norm
/// `means_scale`. Samples are ordered by class.
pub fn synth_gaussian_stream(params: &SynthParams) -> Result<LabeledDataset> {
    let SynthParams {
        class_count,
        dim,
        means_scale,
        noise_sigma,
        ref counts,
        seed,
    } = *params;
    if class_count < 2 {
        return Err(Error::InvalidInput("synthetic stream needs at least 2 classes".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("synthetic stream dimension must be positive".into()));
    }
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise_sigma must be positive and finite, got {noise_sigma}"
        )));
    }
    if !means_scale.is_finite() || means_scale < 0.0 {
        return Err(Error::InvalidInput(format!(
            "means_scale must be finite and non-negative, got {means_scale}"
        )));
    }
    if counts.len() != class_count {
        return Err(Error::InvalidInput(format!(
            "{} per-class counts given for {class_count} classes",
            counts.len()
        )));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("class {c} count must be positive")));
    }

    let mut rng = rng::stream(seed, streams::SYNTH);
    let means: Vec<Vec<f64>> = (0..class_count)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = crate::matrix::norm(&dir);
            dir.into_iter().map(|v| v / n * means_scale).collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(counts.iter().sum());
    for (class, (mean, &count)) in means.iter().zip(counts).enumerate() {
        for _ in 0..count {
            let features = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + noise_sigma * z
                })
                .collect();
            samples.push(Sample::new(features, class));
        }
    }
    LabeledDataset::new(dim, class_count, samples)
}
