//! Experiment configuration files and the run, ablation and data-generation
//! commands built on top of [`crate::session`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierKind, FcConfig, ForestConfig};
use crate::datasets::{
    build_scenario, load_csv_dataset, synth_gaussian_stream, write_csv_dataset, LabelColumn,
    LabeledDataset, Preset, Sample, ScenarioConfig, SessionPlan, Shortfall, SynthParams,
};
use crate::encoder::{Activation, Encode, EncoderConfig};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::memory::SelectionStrategy;
use crate::rng;
use crate::session::{
    run_plan_with, MetricSummary, Objective, PipelineConfig, SessionReport, TrainConfig,
};

/// Parameters of the synthetic Gaussian stream. Class 0 plays the normal
/// class and gets `normal_count` samples, every other class `fault_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub class_count: usize,
    pub dim: usize,
    pub means_scale: f64,
    pub noise_sigma: f64,
    pub normal_count: usize,
    pub fault_count: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_count: 6,
            dim: 24,
            means_scale: 3.0,
            noise_sigma: 1.0,
            normal_count: 200,
            fault_count: 105,
        }
    }
}

impl SynthSpec {
    pub fn params(&self, seed: u64) -> SynthParams {
        let mut counts = vec![self.fault_count; self.class_count];
        if let Some(first) = counts.first_mut() {
            *first = self.normal_count;
        }
        SynthParams {
            class_count: self.class_count,
            dim: self.dim,
            means_scale: self.means_scale,
            noise_sigma: self.noise_sigma,
            counts,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub kind: DataKind,
    /// CSV file, relative paths resolve against the config file directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub label_column: LabelColumn,
    /// Z-score every feature with the dataset-wide mean and deviation.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub synth: SynthSpec,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            kind: DataKind::Synth,
            path: None,
            label_column: LabelColumn::default(),
            standardize: false,
            synth: SynthSpec::default(),
        }
    }
}

/// A preset, optionally with individual fields overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_classes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novel_per_session: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sessions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_train_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_train_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_k: Option<usize>,
}

impl ScenarioSpec {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset: Some(preset),
            ..Default::default()
        }
    }

    pub fn resolve(&self, seed: u64) -> Result<ScenarioConfig> {
        fn need<T: Clone>(v: &Option<T>, base: Option<T>, field: &str) -> Result<T> {
            v.clone().or(base).ok_or_else(|| {
                Error::Config(format!(
                    "scenario.{field} is required when scenario.preset is not set"
                ))
            })
        }
        let base = self.preset.map(|p| p.scenario(seed));
        let b = base.as_ref();
        Ok(ScenarioConfig {
            base_classes: need(&self.base_classes, b.map(|s| s.base_classes.clone()), "base_classes")?,
            novel_per_session: need(&self.novel_per_session, b.map(|s| s.novel_per_session), "novel_per_session")?,
            sessions: need(&self.sessions, b.map(|s| s.sessions), "sessions")?,
            normal_train_count: need(&self.normal_train_count, b.map(|s| s.normal_train_count), "normal_train_count")?,
            fault_train_count: need(&self.fault_train_count, b.map(|s| s.fault_train_count), "fault_train_count")?,
            test_per_class: need(&self.test_per_class, b.map(|s| s.test_per_class), "test_per_class")?,
            memory_k: need(&self.memory_k, b.map(|s| s.memory_k), "memory_k")?,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSpec {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        let d = EncoderConfig::with_defaults(1, 0);
        Self {
            hidden_dims: d.hidden_dims,
            embed_dim: d.embed_dim,
            activation: d.activation,
        }
    }
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dump_embeddings: bool,
    #[serde(default = "default_selection")]
    pub selection: SelectionStrategy,
    #[serde(default)]
    pub classifier: ClassifierKind,
    /// Keep old exemplar sets between sessions.
    #[serde(default = "default_true")]
    pub replay: bool,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub fcc: FcConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_selection() -> SelectionStrategy {
    SelectionStrategy::Mes
}

fn default_true() -> bool {
    true
}

fn default_scenario() -> ScenarioSpec {
    ScenarioSpec::preset(Preset::Synth)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            dump_embeddings: false,
            selection: default_selection(),
            classifier: ClassifierKind::Brf,
            replay: true,
            data: DataSpec::default(),
            scenario: default_scenario(),
            encoder: EncoderSpec::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            fcc: FcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    /// Parses `path`; a relative data path is rebased onto the directory of
    /// the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &config.data.path {
            if p.is_relative() {
                config.data.path = Some(dir.join(p));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.train.validate()?;
        if self.encoder.hidden_dims.is_empty() || self.encoder.hidden_dims.contains(&0) {
            return Err(Error::Config(
                "encoder.hidden_dims must be a nonempty list of positive widths".into(),
            ));
        }
        if self.encoder.embed_dim < 2 {
            return Err(Error::Config("encoder.embed_dim must be at least 2".into()));
        }
        if self.forest.n_trees == 0 {
            return Err(Error::Config("forest.n_trees must be positive".into()));
        }
        if self.forest.mtry == Some(0) || self.forest.min_leaf == 0 {
            return Err(Error::Config("forest.mtry and forest.min_leaf must be positive".into()));
        }
        if !(self.fcc.lr > 0.0 && self.fcc.lr.is_finite()) {
            return Err(Error::Config(format!("fcc.lr must be positive, got {}", self.fcc.lr)));
        }
        match self.data.kind {
            DataKind::Csv => {
                let path = self.data.path.as_ref().ok_or_else(|| {
                    Error::Config("data.path is required when data.kind = \"csv\"".into())
                })?;
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "data.path: {} does not exist",
                        path.display()
                    )));
                }
            }
            DataKind::Synth => {
                let s = &self.data.synth;
                if s.class_count < 2 || s.dim == 0 || s.normal_count == 0 || s.fault_count == 0 {
                    return Err(Error::Config(
                        "data.synth needs class_count >= 2 and positive dim and counts".into(),
                    ));
                }
                if !(s.noise_sigma > 0.0 && s.noise_sigma.is_finite()) {
                    return Err(Error::Config(format!(
                        "data.synth.noise_sigma must be positive, got {}",
                        s.noise_sigma
                    )));
                }
                if !(s.means_scale >= 0.0 && s.means_scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "data.synth.means_scale must be non-negative, got {}",
                        s.means_scale
                    )));
                }
            }
        }
        self.scenario.resolve(self.seed)?;
        Ok(())
    }

    /// The configuration with the scenario written out field by field, so
    /// the echo reproduces the run without consulting preset tables.
    pub fn resolved(&self) -> Result<Self> {
        let s = self.scenario.resolve(self.seed)?;
        let mut out = self.clone();
        out.scenario = ScenarioSpec {
            preset: self.scenario.preset,
            base_classes: Some(s.base_classes),
            novel_per_session: Some(s.novel_per_session),
            sessions: Some(s.sessions),
            normal_train_count: Some(s.normal_train_count),
            fault_train_count: Some(s.fault_train_count),
            test_per_class: Some(s.test_per_class),
            memory_k: Some(s.memory_k),
        };
        Ok(out)
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let ds = match self.data.kind {
            DataKind::Synth => synth_gaussian_stream(
                &self
                    .data
                    .synth
                    .params(rng::derive_seed(self.seed, rng::streams::SYNTH)),
            )
            .map_err(|e| Error::Config(format!("data.synth: {}", strip_kind(&e))))?,
            DataKind::Csv => {
                let path = self
                    .data
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("data.path is required".into()))?;
                load_csv_dataset(path, &self.data.label_column)?
            }
        };
        Ok(if self.data.standardize {
            ds.standardized()
        } else {
            ds
        })
    }

    pub fn plan(&self) -> Result<SessionPlan> {
        let dataset = self.load_dataset()?;
        let scenario = self.scenario.resolve(self.seed)?;
        build_scenario(&dataset, &scenario)
    }

    pub fn pipeline(&self, input_dim: usize) -> Result<PipelineConfig> {
        let scenario = self.scenario.resolve(self.seed)?;
        Ok(PipelineConfig {
            encoder: EncoderConfig {
                input_dim,
                hidden_dims: self.encoder.hidden_dims.clone(),
                embed_dim: self.encoder.embed_dim,
                activation: self.encoder.activation,
                seed: rng::derive_seed(self.seed, rng::streams::ENCODER_INIT),
            },
            loss: self.loss,
            train: self.train.clone(),
            selection: self.selection,
            classifier: self.classifier,
            forest: self.forest,
            fcc: self.fcc,
            memory_k: scenario.memory_k,
            replay: self.replay,
            seed: self.seed,
        })
    }
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Data(m) | Error::InvalidInput(m) | Error::Numerical(m) => {
            m.clone()
        }
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub sessions: Vec<SessionReport>,
    pub summary: MetricSummary,
    pub shortfalls: Vec<Shortfall>,
}

/// Runs every session and returns the report without touching the disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_with(config, |_, _, _| Ok(()))
}

fn run_experiment_with<F>(config: &ExperimentConfig, observe: F) -> Result<RunReport>
where
    F: FnMut(&crate::session::SessionState, &SessionReport, &[Sample]) -> Result<()>,
{
    let plan = config.plan()?;
    let pipeline = config.pipeline(plan.dim)?;
    let outcome = run_plan_with(&plan, &pipeline, observe)?;
    Ok(RunReport {
        seed: config.seed,
        config: config.resolved()?,
        sessions: outcome.reports,
        summary: outcome.summary,
        shortfalls: plan.shortfalls,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// `session,accuracy,average`
pub fn report_csv(reports: &[SessionReport]) -> String {
    let mut out = String::from("session,accuracy,average\n");
    for r in reports {
        out.push_str(&format!("{},{:?},{:?}\n", r.session, r.accuracy, r.average_accuracy));
    }
    out
}

fn dump_embeddings(
    path: &Path,
    state: &crate::session::SessionState,
    test: &[Sample],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let encoder = &state.encoder;
    let exemplars: Vec<Sample> = state.buffer.samples().cloned().collect();
    let mut rows: Vec<(&str, &Sample)> = exemplars.iter().map(|s| ("exemplar", s)).collect();
    rows.extend(test.iter().map(|s| ("test", s)));
    let features: Vec<&[f64]> = rows.iter().map(|(_, s)| &s.features[..]).collect();
    let z = encoder.encode_batch(&features)?;
    let mut write = || -> std::io::Result<()> {
        write!(out, "session,class,split")?;
        for k in 0..encoder.embed_dim() {
            write!(out, ",e{k}")?;
        }
        writeln!(out)?;
        for ((split, s), e) in rows.iter().zip(&z) {
            write!(out, "{},{},{split}", state.session_index, s.label)?;
            for v in e.iter() {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Runs the experiment and writes `config.toml`, `report.json`, `report.csv`,
/// the final encoder and, when enabled, one embedding CSV per session into
/// `config.out_dir`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let out_dir = config.out_dir.clone();
    create_dir(&out_dir)?;
    let dump = config.dump_embeddings;
    let mut final_encoder = None;
    let report = run_experiment_with(config, |state, _, test| {
        if dump {
            let path = out_dir.join(format!("embeddings_session{}.csv", state.session_index));
            dump_embeddings(&path, state, test)?;
        }
        final_encoder = Some(state.encoder.clone());
        Ok(())
    })?;
    write_file(&out_dir.join("config.toml"), &report.config.to_toml())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out_dir.join("report.json"), &(json + "\n"))?;
    write_file(&out_dir.join("report.csv"), &report_csv(&report.sessions))?;
    if let Some(encoder) = final_encoder {
        encoder.save(&out_dir.join("encoder.json"))?;
    }
    Ok(report)
}

/// Values swept by an ablation; an axis left empty keeps the config value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationAxes {
    pub loss: Vec<Objective>,
    pub selection: Vec<SelectionStrategy>,
    pub classifier: Vec<ClassifierKind>,
}

impl AblationAxes {
    pub fn full() -> Self {
        Self {
            loss: Objective::ALL.to_vec(),
            selection: SelectionStrategy::ALL.to_vec(),
            classifier: ClassifierKind::ALL.to_vec(),
        }
    }

    /// Parses specs such as `selection` (every value) or
    /// `loss=scl,ce`.
    pub fn parse<S: AsRef<str>>(specs: &[S]) -> Result<Self> {
        let mut axes = Self::default();
        for spec in specs {
            let spec = spec.as_ref().trim();
            let (name, values) = match spec.split_once('=') {
                Some((n, v)) => (n.trim(), Some(v)),
                None => (spec, None),
            };
            let items = |v: &str| -> Vec<String> {
                v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            };
            let unknown = |value: &str| {
                Error::Config(format!("unknown value {value:?} for ablation axis {name}"))
            };
            match name {
                "loss" => {
                    axes.loss = match values {
                        None => Objective::ALL.to_vec(),
                        Some(v) => items(v)
                            .iter()
                            .map(|s| Objective::from_name(s).ok_or_else(|| unknown(s)))
                            .collect::<Result<_>>()?,
                    }
                }
                "selection" => {
                    axes.selection = match values {
                        None => SelectionStrategy::ALL.to_vec(),
                        Some(v) => items(v)
                            .iter()
                            .map(|s| SelectionStrategy::from_name(s).ok_or_else(|| unknown(s)))
                            .collect::<Result<_>>()?,
                    }
                }
                "classifier" => {
                    axes.classifier = match values {
                        None => ClassifierKind::ALL.to_vec(),
                        Some(v) => items(v)
                            .iter()
                            .map(|s| ClassifierKind::from_name(s).ok_or_else(|| unknown(s)))
                            .collect::<Result<_>>()?,
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown ablation axis {other:?} (expected loss, selection or classifier)"
                    )))
                }
            }
        }
        Ok(axes)
    }

    /// The cross product in loss, selection, classifier order.
    pub fn variants(&self, base: &ExperimentConfig) -> Vec<Variant> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &loss in &or(&self.loss, base.train.objective) {
            for &selection in &or(&self.selection, base.selection) {
                for &classifier in &or(&self.classifier, base.classifier) {
                    out.push(Variant {
                        loss,
                        selection,
                        classifier,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub loss: Objective,
    pub selection: SelectionStrategy,
    pub classifier: ClassifierKind,
}

impl Variant {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.train.objective = self.loss;
        c.selection = self.selection;
        c.classifier = self.classifier;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: RunReport,
}

/// Runs every variant in parallel under the config's master seed and
/// returns them in enumeration order.
pub fn run_ablation(config: &ExperimentConfig, axes: &AblationAxes) -> Result<Vec<AblationRow>> {
    config.validate()?;
    axes.variants(config)
        .into_par_iter()
        .map(|variant| {
            Ok(AblationRow {
                variant,
                report: run_experiment(&variant.apply(config))?,
            })
        })
        .collect()
}

/// `loss,selection,classifier,session_1..session_S,average`
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let sessions = rows.first().map_or(0, |r| r.report.sessions.len());
    let mut out = String::from("loss,selection,classifier");
    for s in 1..=sessions {
        out.push_str(&format!(",session_{s}"));
    }
    out.push_str(",average\n");
    for row in rows {
        let v = row.variant;
        out.push_str(&format!("{},{},{}", v.loss.name(), v.selection.name(), v.classifier.name()));
        for r in &row.report.sessions {
            out.push_str(&format!(",{:?}", r.accuracy));
        }
        out.push_str(&format!(",{:?}\n", row.report.summary.average));
    }
    out
}

/// Writes `ablation.csv` and a config echo into `config.out_dir`.
pub fn cmd_ablate(config: &ExperimentConfig, axes: &AblationAxes) -> Result<Vec<AblationRow>> {
    let rows = run_ablation(config, axes)?;
    create_dir(&config.out_dir)?;
    write_file(&config.out_dir.join("config.toml"), &config.resolved()?.to_toml())?;
    write_file(&config.out_dir.join("ablation.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}

/// Generates a synthetic dataset and writes it as a loadable CSV.
pub fn cmd_gensynth(params: &SynthParams, out: &Path) -> Result<LabeledDataset> {
    let dataset = synth_gaussian_stream(params)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_csv_dataset(&dataset, out)?;
    Ok(dataset)
}

/// The default configuration as TOML.
pub fn defaults_toml() -> String {
    ExperimentConfig::default().to_toml()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = defaults_toml();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, ExperimentConfig::default());
        back.validate().unwrap();
    }

    #[test]
    fn zero_temperature_names_the_field() {
        let c = ExperimentConfig::from_toml_str("[loss]\ntemperature = 0.0\n").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("loss.temperature"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("sed = 3\n").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
        let err = ExperimentConfig::from_toml_str("selection = \"best\"\n").unwrap_err();
        assert!(err.to_string().contains("selection"), "{err}");
    }

    #[test]
    fn scenario_without_preset_needs_every_field() {
        let spec = ScenarioSpec {
            sessions: Some(2),
            ..Default::default()
        };
        let err = spec.resolve(0).unwrap_err();
        assert!(err.to_string().contains("scenario.base_classes"), "{err}");
        let spec = ScenarioSpec {
            memory_k: Some(4),
            ..ScenarioSpec::preset(Preset::TepImbalanced)
        };
        assert_eq!(spec.resolve(1).unwrap().memory_k, 4);
    }

    #[test]
    fn axis_enumeration() {
        let base = ExperimentConfig::default();
        assert_eq!(AblationAxes::parse(&["selection"]).unwrap().variants(&base).len(), 4);
        assert_eq!(AblationAxes::full().variants(&base).len(), 16);
        let axes = AblationAxes::parse(&["loss=ce", "classifier=fcc,brf"]).unwrap();
        assert_eq!(axes.variants(&base).len(), 2);
        assert!(AblationAxes::parse(&["selection=best"]).is_err());
        assert!(AblationAxes::parse(&["optimizer"]).is_err());
        assert_eq!(AblationAxes::default().variants(&base).len(), 1);
    }

    #[test]
    fn csv_data_path_must_exist() {
        let mut c = ExperimentConfig::default();
        c.data.kind = DataKind::Csv;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        c.data.path = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(c.validate().unwrap_err().to_string().contains("data.path"));
    }
}
