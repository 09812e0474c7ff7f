//! Incremental sessions: encoder update, exemplar maintenance, classifier
//! training and evaluation on the cumulative test set.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::classifier::{
    brf_fit_with, fcc_fit_with, ClassifierKind, FcConfig, ForestConfig, TrainedClassifier,
};
use crate::datasets::{make_augmented_batch, Sample, SessionData, SessionPlan};
use crate::encoder::{init_encoder, value_and_gradients, Encode, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::losses::{
    encoder_objective, logit_distillation, softmax_cross_entropy, LossConfig, SessionInfo,
};
use crate::matrix::Matrix;
use crate::memory::{
    construct_buffer, per_class_quota, reduce_exemplar_sets, select_exemplars, MemoryBuffer,
    SelectionStrategy,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, streams};

/// Representation-learning objective for the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Supervised contrastive loss plus embedding distillation.
    #[default]
    Scl,
    /// Softmax cross-entropy over a growing linear head plus logit
    /// distillation on the old-class columns.
    Ce,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::Scl, Objective::Ce];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Scl => "scl",
            Objective::Ce => "ce",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }
}

/// Softening temperature of the logit distillation used by [`Objective::Ce`].
pub const CE_DISTILL_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Upper bound on augmented views per mini-batch.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub objective: Objective,
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    512
}

fn default_lr() -> f64 {
    0.01
}

fn default_weight_decay() -> f64 {
    1e-5
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            objective: Objective::Scl,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be at least 2".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "train.lr must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "train.weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..Default::default()
        })
    }
}

/// Everything a run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub selection: SelectionStrategy,
    pub classifier: ClassifierKind,
    pub forest: ForestConfig,
    pub fcc: FcConfig,
    /// Total exemplar budget `K`.
    pub memory_k: usize,
    /// When false, old exemplar sets are discarded every session.
    pub replay: bool,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        if self.memory_k == 0 {
            return Err(Error::Config("memory_k must be positive".into()));
        }
        if self.forest.n_trees == 0 {
            return Err(Error::Config("forest.n_trees must be positive".into()));
        }
        if self.forest.mtry == Some(0) {
            return Err(Error::Config("forest.mtry must be positive".into()));
        }
        if !(self.fcc.lr > 0.0 && self.fcc.lr.is_finite()) {
            return Err(Error::Config(format!("fcc.lr must be positive, got {}", self.fcc.lr)));
        }
        Ok(())
    }
}

/// Linear head used by the cross-entropy objective. Row `k` scores
/// `classes[k]`, in the order the classes were first seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub classes: Vec<usize>,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    fn empty(dim: usize) -> Self {
        Self {
            classes: Vec::new(),
            weight: Matrix::zeros(0, dim),
            bias: Vec::new(),
        }
    }

    /// Appends rows for `new` classes, drawn from `N(0, 0.01²)`.
    fn extended<R: rand::Rng + ?Sized>(&self, new: &[usize], rng: &mut R) -> Self {
        let dim = self.weight.cols();
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let mut data = self.weight.as_slice().to_vec();
        let mut classes = self.classes.clone();
        let mut bias = self.bias.clone();
        for &c in new {
            classes.push(c);
            bias.push(0.0);
            data.extend((0..dim).map(|_| normal.sample(rng)));
        }
        Self {
            weight: Matrix::from_vec(classes.len(), dim, data),
            classes,
            bias,
        }
    }

    fn column(&self, class: usize) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::InvalidInput(format!("head has no column for class {class}")))
    }

    fn logits(&self, z: &Matrix) -> Matrix {
        let mut out = z.matmul_t(&self.weight);
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    /// Sessions completed so far.
    pub session_index: usize,
    /// Seen classes in the order they arrived.
    pub seen_classes: Vec<usize>,
    /// Classes of the first session.
    pub base_classes: Vec<usize>,
    pub encoder: EncoderParams,
    /// Snapshot of the encoder that entered the latest session; present from
    /// the second session on.
    pub teacher: Option<EncoderParams>,
    pub buffer: MemoryBuffer,
    pub classifier: Option<TrainedClassifier>,
    /// Only maintained by the cross-entropy objective.
    pub head: Option<LinearHead>,
    pub accuracies: Vec<f64>,
}

impl SessionState {
    pub fn initial(config: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            session_index: 0,
            seen_classes: Vec::new(),
            base_classes: Vec::new(),
            encoder: init_encoder(&config.encoder)?,
            teacher: None,
            buffer: MemoryBuffer::new(config.memory_k),
            classifier: None,
            head: None,
            accuracies: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    /// 1-based.
    pub session: usize,
    pub new_classes: Vec<usize>,
    /// Seen classes in ascending order; indexes the confusion matrix.
    pub classes: Vec<usize>,
    pub accuracy: f64,
    /// Accuracy on test samples of classes seen before this session.
    pub old_class_accuracy: Option<f64>,
    /// Accuracy on test samples of the first session's classes.
    pub base_class_accuracy: f64,
    /// `confusion[true][predicted]` over `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub average_accuracy: f64,
    /// Mean encoder loss per epoch.
    pub encoder_losses: Vec<f64>,
    pub buffer_size: usize,
    pub test_count: usize,
}

/// Per-session accuracies and their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_session: Vec<f64>,
    pub average: f64,
}

impl MetricSummary {
    pub fn from_accuracies(accuracies: &[f64]) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::InvalidInput("no session accuracies to aggregate".into()));
        }
        Ok(Self {
            per_session: accuracies.to_vec(),
            average: accuracies.iter().sum::<f64>() / accuracies.len() as f64,
        })
    }
}

pub fn aggregate_metrics(reports: &[SessionReport]) -> Result<MetricSummary> {
    MetricSummary::from_accuracies(&reports.iter().map(|r| r.accuracy).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderUpdate {
    pub params: EncoderParams,
    pub head: Option<LinearHead>,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batches over `data`: each epoch shuffles the samples and cuts them
/// into chunks of `⌊views/2⌋`, so every class in a chunk yields at least two
/// augmented views.
fn epoch_batches<R: rand::Rng + ?Sized>(n: usize, views: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let per_batch = (views / 2).clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(per_batch).map(<[usize]>::to_vec).collect()
}

fn views_matrix(views: &[Sample]) -> (Matrix, Vec<usize>) {
    let rows: Vec<&[f64]> = views.iter().map(|s| &s.features[..]).collect();
    (Matrix::from_rows(&rows), views.iter().map(|s| s.label).collect())
}

fn embeddings_matrix(encoder: &EncoderParams, inputs: &Matrix) -> Result<Matrix> {
    let z = encoder.encode_matrix(inputs)?;
    Ok(Matrix::from_rows(&z.iter().map(|e| &e[..]).collect::<Vec<_>>()))
}

fn training_data(new_class_data: &[Sample], buffer: &MemoryBuffer) -> Result<Vec<Sample>> {
    if new_class_data.is_empty() {
        return Err(Error::InvalidInput("no new-class training data".into()));
    }
    Ok(new_class_data.iter().chain(buffer.samples()).cloned().collect())
}

/// Trains the encoder on the new-class samples together with every buffered
/// exemplar under `L_scl + kd_weight · L_dis`. The incoming encoder is the
/// distillation teacher from the second session on.
pub fn update_feature_extractor<R: rand::Rng + ?Sized>(
    new_class_data: &[Sample],
    buffer: &MemoryBuffer,
    encoder: &EncoderParams,
    session: SessionInfo,
    train: &TrainConfig,
    loss: &LossConfig,
    rng: &mut R,
) -> Result<EncoderUpdate> {
    let data = training_data(new_class_data, buffer)?;
    let teacher = encoder.clone();
    let mut params = encoder.clone();
    let mut adam = train.adam();
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let views = train.batch_size.min(2 * data.len());

    for epoch in 0..train.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in epoch_batches(data.len(), views, rng) {
            let samples: Vec<Sample> = batch.iter().map(|&i| data[i].clone()).collect();
            let augmented = make_augmented_batch(&samples, rng)?;
            let (inputs, labels) = views_matrix(&augmented);
            let teacher_z = if session.distills() {
                Some(embeddings_matrix(&teacher, &inputs)?)
            } else {
                None
            };
            let (value, grads) = value_and_gradients(&params, |tape, vars| {
                encoder_objective(tape, vars, &inputs, &labels, teacher_z.as_ref(), session, loss)
            })
            .map_err(|e| annotate(e, session.session, epoch))?;
            params = params.adam_step(&grads, &mut adam);
            if !params.all_finite() {
                return Err(Error::Numerical(format!(
                    "encoder parameters became non-finite in session {} epoch {}",
                    session.session,
                    epoch + 1
                )));
            }
            total += value;
            count += 1;
        }
        epoch_losses.push(total / count as f64);
    }
    Ok(EncoderUpdate {
        params,
        head: None,
        epoch_losses,
    })
}

fn annotate(e: Error, session: usize, epoch: usize) -> Error {
    match e {
        Error::Numerical(msg) => {
            Error::Numerical(format!("session {session} epoch {}: {msg}", epoch + 1))
        }
        other => other,
    }
}

/// Cross-entropy counterpart of [`update_feature_extractor`]: the encoder and
/// a linear head over all seen classes train on softmax cross-entropy, with
/// logit distillation from the previous encoder and head on the old columns.
#[allow(clippy::too_many_arguments)]
pub fn update_feature_extractor_ce<R: rand::Rng + ?Sized>(
    new_class_data: &[Sample],
    buffer: &MemoryBuffer,
    encoder: &EncoderParams,
    head: &LinearHead,
    session: SessionInfo,
    train: &TrainConfig,
    loss: &LossConfig,
    rng: &mut R,
) -> Result<EncoderUpdate> {
    let data = training_data(new_class_data, buffer)?;
    let old_columns = head.classes.len();
    let new_classes: Vec<usize> = data
        .iter()
        .map(|s| s.label)
        .filter(|c| !head.classes.contains(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let teacher = (encoder.clone(), head.clone());
    let mut head = head.extended(&new_classes, rng);
    let mut params = encoder.clone();
    let mut adam = train.adam();
    let slots = 2 * params.layers().len();
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let views = train.batch_size.min(2 * data.len());

    for epoch in 0..train.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in epoch_batches(data.len(), views, rng) {
            let samples: Vec<Sample> = batch.iter().map(|&i| data[i].clone()).collect();
            let augmented = make_augmented_batch(&samples, rng)?;
            let (inputs, labels) = views_matrix(&augmented);
            let targets = labels
                .iter()
                .map(|&c| head.column(c))
                .collect::<Result<Vec<_>>>()?;
            let teacher_logits = if session.distills() && old_columns > 0 {
                Some(teacher.1.logits(&embeddings_matrix(&teacher.0, &inputs)?))
            } else {
                None
            };

            let mut tape = Tape::new();
            let vars = params.register(&mut tape);
            let w = tape.leaf(head.weight.clone());
            let b = tape.leaf(Matrix::from_vec(1, head.bias.len(), head.bias.clone()));
            let x = tape.leaf(inputs);
            let z = vars.embed(&mut tape, x);
            let logits = tape.matmul_t(z, w);
            let logits = tape.add_bias(logits, b);
            let (mut value, mut grad) = softmax_cross_entropy(tape.value(logits), &targets);
            if let Some(t) = &teacher_logits {
                let (kd, kd_grad) = logit_distillation(
                    tape.value(logits),
                    t,
                    old_columns,
                    CE_DISTILL_TEMPERATURE,
                );
                value += loss.kd_weight * kd;
                grad.add_assign(&kd_grad.scale(loss.kd_weight));
            }
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "session {} epoch {}: loss evaluated to {value}",
                    session.session,
                    epoch + 1
                )));
            }
            let root = tape.fused_scalar(value, vec![(logits, grad)]);
            let grads = tape.backward(root);
            let encoder_grads = vars.collect(&grads);
            params = params.adam_step(&encoder_grads, &mut adam);
            adam.update(slots, head.weight.as_mut_slice(), grads.wrt(w).as_slice());
            adam.update(slots + 1, &mut head.bias, grads.wrt(b).as_slice());
            if !params.all_finite() || !head.weight.all_finite() {
                return Err(Error::Numerical(format!(
                    "parameters became non-finite in session {} epoch {}",
                    session.session,
                    epoch + 1
                )));
            }
            total += value;
            count += 1;
        }
        epoch_losses.push(total / count as f64);
    }
    Ok(EncoderUpdate {
        params,
        head: Some(head),
        epoch_losses,
    })
}

fn embed_samples(encoder: &EncoderParams, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let features: Vec<&[f64]> = samples.iter().map(|s| &s.features[..]).collect();
    Ok(encoder
        .encode_batch(&features)?
        .into_iter()
        .map(|e| e.into_vec())
        .collect())
}

/// Fits a fresh classifier on the embeddings of every buffered exemplar and
/// labels `test_samples`. Every test label must have exemplars in `buffer`.
pub fn train_classifier_and_classify(
    buffer: &MemoryBuffer,
    encoder: &EncoderParams,
    test_samples: &[Sample],
    kind: ClassifierKind,
    forest: &ForestConfig,
    fcc: &FcConfig,
    seed: u64,
) -> Result<(TrainedClassifier, Vec<usize>)> {
    if let Some(s) = test_samples.iter().find(|s| buffer.get(s.label).is_none()) {
        return Err(Error::InvalidInput(format!(
            "memory buffer has no exemplars of seen class {}",
            s.label
        )));
    }
    fit_and_predict(buffer, encoder, test_samples, kind, forest, fcc, seed)
}

fn fit_and_predict(
    buffer: &MemoryBuffer,
    encoder: &EncoderParams,
    test_samples: &[Sample],
    kind: ClassifierKind,
    forest: &ForestConfig,
    fcc: &FcConfig,
    seed: u64,
) -> Result<(TrainedClassifier, Vec<usize>)> {
    let exemplars: Vec<Sample> = buffer.samples().cloned().collect();
    if exemplars.is_empty() {
        return Err(Error::InvalidInput("memory buffer is empty".into()));
    }
    let rows: Vec<(Vec<f64>, usize)> = embed_samples(encoder, &exemplars)?
        .into_iter()
        .zip(exemplars.iter().map(|s| s.label))
        .collect();
    let classes: BTreeSet<usize> = rows.iter().map(|r| r.1).collect();

    let classifier = if classes.len() == 1 {
        TrainedClassifier::Constant(*classes.first().expect("one class"))
    } else {
        match kind {
            ClassifierKind::Brf => TrainedClassifier::Forest(brf_fit_with(&rows, forest, seed)?),
            ClassifierKind::Fcc => TrainedClassifier::Fc(fcc_fit_with(&rows, fcc, seed)?),
        }
    };
    let predictions = embed_samples(encoder, test_samples)?
        .iter()
        .map(|z| classifier.predict(z))
        .collect::<Result<Vec<_>>>()?;
    Ok((classifier, predictions))
}

fn accuracy_where(test: &[Sample], predictions: &[usize], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (s, &p) in test.iter().zip(predictions) {
        if keep(s.label) {
            total += 1;
            hit += usize::from(s.label == p);
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Runs one session: encoder update, quota reduction, selection for the new
/// classes with the updated encoder, buffer construction, then classifier
/// training and evaluation on `test` (the cumulative test set).
pub fn run_incremental_session(
    state: SessionState,
    new: &SessionData,
    test: &[Sample],
    config: &PipelineConfig,
) -> Result<(SessionState, SessionReport)> {
    if new.classes.is_empty() {
        return Err(Error::InvalidInput("session introduces no classes".into()));
    }
    if let Some(c) = new.classes.iter().find(|c| state.seen_classes.contains(c)) {
        return Err(Error::InvalidInput(format!("class {c} was already seen")));
    }
    let session = state.session_index + 1;
    if test.is_empty() {
        return Err(Error::Data(format!(
            "session {session} has an empty test set; every seen class needs held-out samples"
        )));
    }
    let session_seed = rng::derive_seed(config.seed, session as u64);
    let mut seen = state.seen_classes.clone();
    seen.extend(&new.classes);
    let info = SessionInfo {
        session,
        seen_classes: seen.len(),
    };

    let new_data: Vec<Sample> = new.train_samples().cloned().collect();
    let replayed = if config.replay {
        state.buffer.clone()
    } else {
        MemoryBuffer::new(config.memory_k)
    };

    // (1) encoder update
    let mut train_rng = rng::stream(session_seed, streams::TRAINING);
    let update = match config.train.objective {
        Objective::Scl => update_feature_extractor(
            &new_data,
            &replayed,
            &state.encoder,
            info,
            &config.train,
            &config.loss,
            &mut train_rng,
        )?,
        Objective::Ce => {
            let head = state
                .head
                .clone()
                .unwrap_or_else(|| LinearHead::empty(config.encoder.embed_dim));
            let mut update = update_feature_extractor_ce(
                &new_data,
                &replayed,
                &state.encoder,
                &head,
                info,
                &config.train,
                &config.loss,
                &mut train_rng,
            )?;
            update.head.get_or_insert(head);
            update
        }
    };

    // (2) quota and reduction of old sets
    let m = per_class_quota(config.memory_k, seen.len());
    let reduced = reduce_exemplar_sets(&replayed, m);

    // (3) selection for the new classes with the updated encoder
    let mut select_rng = rng::stream(session_seed, streams::SELECTION);
    let mut new_sets = Vec::with_capacity(new.classes.len());
    for c in &new.classes {
        let samples = &new.train[c];
        let take = m.min(samples.len());
        new_sets.push(select_exemplars(
            config.selection,
            samples,
            &update.params,
            take,
            &mut select_rng,
        )?);
    }

    // (4) new buffer
    let buffer = construct_buffer(&reduced, new_sets)?;

    // (5) classifier on the buffer, evaluated on the cumulative test set
    let classifier_seed = rng::derive_seed(session_seed, streams::FOREST);
    // without replay the buffer only covers this session's classes
    let classify = if config.replay {
        train_classifier_and_classify
    } else {
        fit_and_predict
    };
    let (classifier, predictions) = classify(
        &buffer,
        &update.params,
        test,
        config.classifier,
        &config.forest,
        &config.fcc,
        classifier_seed,
    )?;

    // (6) report
    let mut classes = seen.clone();
    classes.sort_unstable();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for (s, &p) in test.iter().zip(&predictions) {
        let row = classes.binary_search(&s.label).map_err(|_| {
            Error::InvalidInput(format!("test sample of unseen class {}", s.label))
        })?;
        let col = classes
            .binary_search(&p)
            .expect("classifier predicts seen classes");
        confusion[row][col] += 1;
    }
    let hits: usize = (0..classes.len()).map(|i| confusion[i][i]).sum();
    let accuracy = hits as f64 / test.len() as f64;
    let base_classes = if state.base_classes.is_empty() {
        new.classes.clone()
    } else {
        state.base_classes.clone()
    };
    let old_class_accuracy =
        accuracy_where(test, &predictions, |c| state.seen_classes.contains(&c));
    let base_class_accuracy =
        accuracy_where(test, &predictions, |c| base_classes.contains(&c)).unwrap_or(0.0);
    let mut accuracies = state.accuracies.clone();
    accuracies.push(accuracy);
    let average_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;

    let report = SessionReport {
        session,
        new_classes: new.classes.clone(),
        classes,
        accuracy,
        old_class_accuracy,
        base_class_accuracy,
        confusion,
        average_accuracy,
        encoder_losses: update.epoch_losses,
        buffer_size: buffer.total_exemplars(),
        test_count: test.len(),
    };
    let next = SessionState {
        session_index: session,
        seen_classes: seen,
        base_classes,
        encoder: update.params,
        teacher: (session >= 2).then(|| state.encoder.clone()),
        buffer,
        classifier: Some(classifier),
        head: update.head,
        accuracies,
    };
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub reports: Vec<SessionReport>,
    pub summary: MetricSummary,
    pub final_state: SessionState,
}

/// Runs every session of `plan` in order. `observe` sees the state after
/// each session along with that session's cumulative test set.
pub fn run_plan_with<F>(plan: &SessionPlan, config: &PipelineConfig, mut observe: F) -> Result<RunOutcome>
where
    F: FnMut(&SessionState, &SessionReport, &[Sample]) -> Result<()>,
{
    config.validate()?;
    if config.encoder.input_dim != plan.dim {
        return Err(Error::Config(format!(
            "encoder.input_dim is {} but the data has {} features",
            config.encoder.input_dim, plan.dim
        )));
    }
    let mut state = SessionState::initial(config)?;
    let mut reports = Vec::with_capacity(plan.sessions.len());
    for (k, data) in plan.sessions.iter().enumerate() {
        let test = plan.test_for(&plan.classes_through(k));
        let (next, report) = run_incremental_session(state, data, &test, config)?;
        observe(&next, &report, &test)?;
        reports.push(report);
        state = next;
    }
    let summary = aggregate_metrics(&reports)?;
    Ok(RunOutcome {
        reports,
        summary,
        final_state: state,
    })
}

pub fn run_plan(plan: &SessionPlan, config: &PipelineConfig) -> Result<RunOutcome> {
    run_plan_with(plan, config, |_, _, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{build_scenario, synth_gaussian_stream, Preset, SynthParams};

    fn small_config(dim: usize, seed: u64) -> PipelineConfig {
        PipelineConfig {
            encoder: EncoderConfig {
                input_dim: dim,
                hidden_dims: vec![16],
                embed_dim: 4,
                activation: Default::default(),
                seed,
            },
            loss: LossConfig::default(),
            train: TrainConfig {
                epochs: 5,
                ..Default::default()
            },
            selection: SelectionStrategy::Mes,
            classifier: ClassifierKind::Brf,
            forest: ForestConfig {
                n_trees: 10,
                ..Default::default()
            },
            fcc: FcConfig {
                epochs: 20,
                ..Default::default()
            },
            memory_k: 12,
            replay: true,
            seed,
        }
    }

    fn small_plan(seed: u64) -> SessionPlan {
        let data = synth_gaussian_stream(&SynthParams {
            class_count: 6,
            dim: 8,
            means_scale: 4.0,
            noise_sigma: 1.0,
            counts: vec![60, 20, 20, 20, 20, 20],
            seed,
        })
        .unwrap();
        let mut scenario = Preset::Synth.scenario(seed);
        scenario.normal_train_count = 40;
        scenario.test_per_class = 10;
        build_scenario(&data, &scenario).unwrap()
    }

    #[test]
    fn quota_and_coverage_hold_across_sessions() {
        let plan = small_plan(1);
        let out = run_plan_with(&plan, &small_config(8, 1), |state, report, test| {
            let mut classes = state.seen_classes.clone();
            classes.sort_unstable();
            assert_eq!(state.buffer.classes().len(), classes.len());
            assert_eq!(report.classes, classes);
            assert_eq!(test.len(), 10 * classes.len());
            let m = per_class_quota(12, classes.len());
            assert!(state.buffer.sets().iter().all(|s| s.len() <= m));
            assert!(state.buffer.total_exemplars() <= 12 + classes.len() - 1);
            assert_eq!(state.teacher.is_some(), state.session_index >= 2);
            let total: usize = report.confusion.iter().flatten().sum();
            let trace: usize = (0..classes.len()).map(|i| report.confusion[i][i]).sum();
            assert_eq!(report.accuracy, trace as f64 / total as f64);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.reports.len(), 3);
        let mean = out.reports.iter().map(|r| r.accuracy).sum::<f64>() / 3.0;
        assert_eq!(out.summary.average, mean);
        assert_eq!(out.reports[2].average_accuracy, mean);
    }

    #[test]
    fn runs_are_deterministic() {
        let plan = small_plan(2);
        let a = run_plan(&plan, &small_config(8, 2)).unwrap();
        let b = run_plan(&plan, &small_config(8, 2)).unwrap();
        assert_eq!(a.reports, b.reports);
    }

    #[test]
    fn ce_objective_runs() {
        let plan = small_plan(3);
        let mut cfg = small_config(8, 3);
        cfg.train.objective = Objective::Ce;
        cfg.classifier = ClassifierKind::Fcc;
        let out = run_plan(&plan, &cfg).unwrap();
        assert_eq!(out.final_state.head.unwrap().classes.len(), 6);
    }

    #[test]
    fn zero_epochs_and_zero_lr_leave_encoder_unchanged() {
        let plan = small_plan(4);
        let cfg = small_config(8, 4);
        let enc = init_encoder(&cfg.encoder).unwrap();
        let data: Vec<Sample> = plan.sessions[0].train_samples().cloned().collect();
        let info = SessionInfo {
            session: 1,
            seen_classes: 2,
        };
        let mut rng = rng::stream(0, 0);
        let mut train = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let up = update_feature_extractor(
            &data,
            &MemoryBuffer::new(12),
            &enc,
            info,
            &train,
            &cfg.loss,
            &mut rng,
        )
        .unwrap();
        assert_eq!(up.params, enc);
        train.epochs = 3;
        train.lr = 0.0;
        let up = update_feature_extractor(
            &data,
            &MemoryBuffer::new(12),
            &enc,
            info,
            &train,
            &cfg.loss,
            &mut rng,
        )
        .unwrap();
        assert_eq!(up.params, enc);
    }

    #[test]
    fn aggregate_matches_arithmetic_mean() {
        let s = MetricSummary::from_accuracies(&[1.0, 0.5]).unwrap();
        assert_eq!(s.average, 0.75);
        assert_eq!(MetricSummary::from_accuracies(&[0.3]).unwrap().average, 0.3);
        assert!(MetricSummary::from_accuracies(&[]).is_err());
    }
}
