//! Contrastive and distillation objectives over batches of embeddings.
//!
//! For anchor `i` in a batch `I` the candidate set is `A(i) = I \ {i}` and the
//! positives are `P(i) = {p ∈ A(i) : y_p = y_i}`. Similarities are inner
//! products of unit vectors scaled by `1/τ`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::datasets::Sample;
use crate::encoder::{Embedding, Encode, EncoderParams, EncoderVars, FrozenEncoder};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Multiplier on the distillation term.
    #[serde(default = "default_kd_weight")]
    pub kd_weight: f64,
}

fn default_temperature() -> f64 {
    0.07
}

fn default_kd_weight() -> f64 {
    1.0
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            kd_weight: default_kd_weight(),
        }
    }
}

impl LossConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "loss.temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.kd_weight >= 0.0 && self.kd_weight.is_finite()) {
            return Err(Error::Config(format!(
                "loss.kd_weight must be non-negative, got {}",
                self.kd_weight
            )));
        }
        Ok(())
    }
}

/// Embeddings of one augmented batch with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    embeddings: Vec<Embedding>,
    labels: Vec<usize>,
}

impl ContrastiveBatch {
    pub fn new(embeddings: Vec<Embedding>, labels: Vec<usize>) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} embeddings but {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        if embeddings.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "contrastive batch needs at least 2 elements, got {}",
                embeddings.len()
            )));
        }
        let d = embeddings[0].len();
        if embeddings.iter().any(|e| e.len() != d) {
            return Err(Error::InvalidInput("embeddings differ in dimension".into()));
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.embeddings.iter().map(|e| &e[..]).collect::<Vec<_>>())
    }

    /// `P(i)`
    pub fn positives(&self, anchor: usize) -> Vec<usize> {
        positives(&self.labels, anchor)
    }
}

fn positives(labels: &[usize], anchor: usize) -> Vec<usize> {
    (0..labels.len())
        .filter(|&p| p != anchor && labels[p] == labels[anchor])
        .collect()
}

/// Scaled similarities `z_i·z_a/τ` for every row, with `-inf` on the diagonal.
fn logits_row(z: &Matrix, i: usize, tau: f64) -> Vec<f64> {
    let zi = z.row(i);
    (0..z.rows())
        .map(|a| {
            if a == i {
                f64::NEG_INFINITY
            } else {
                dot(zi, z.row(a)) / tau
            }
        })
        .collect()
}

/// Log-softmax over `A(i)` (the diagonal entry stays `-inf`).
fn log_softmax_row(z: &Matrix, i: usize, tau: f64) -> Vec<f64> {
    let logits = logits_row(z, i, tau);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|s| (s - max).exp()).sum();
    let lse = max + sum.ln();
    logits.into_iter().map(|s| s - lse).collect()
}

/// Adds the chain rule through `s_ia = z_i·z_a/τ` for weights `g_ia = ∂L/∂s_ia`.
fn accumulate_similarity_grad(z: &Matrix, i: usize, g: &[f64], tau: f64, out: &mut Matrix) {
    let d = z.cols();
    let zi = z.row(i).to_vec();
    for (a, &w) in g.iter().enumerate() {
        if a == i || w == 0.0 {
            continue;
        }
        let s = w / tau;
        for k in 0..d {
            let za = z.get(a, k);
            out.set(i, k, out.get(i, k) + s * za);
            out.set(a, k, out.get(a, k) + s * zi[k]);
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")))
    }
}

/// Softmax of `z_i·z_a/τ` over `a ∈ A(i)`, returned in ascending `a` order
/// (the anchor itself is skipped).
pub fn similarity_distribution(batch: &ContrastiveBatch, anchor: usize, config: &LossConfig) -> Result<Vec<f64>> {
    check_tau(config.temperature)?;
    if anchor >= batch.len() {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor} out of range for batch of {}",
            batch.len()
        )));
    }
    let z = batch.to_matrix();
    Ok(log_softmax_row(&z, anchor, config.temperature)
        .into_iter()
        .enumerate()
        .filter(|&(a, _)| a != anchor)
        .map(|(_, l)| l.exp())
        .collect())
}

/// Value and `∂L/∂Z` of the supervised contrastive loss
/// `Σ_i −1/|P(i)| Σ_{p∈P(i)} log softmax_{A(i)}(z_i·z_a/τ)[p]`.
pub fn scl_value_and_grad(z: &Matrix, labels: &[usize], tau: f64) -> Result<(f64, Matrix)> {
    check_tau(tau)?;
    let n = z.rows();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, z.cols());
    for i in 0..n {
        let pos = positives(labels, i);
        if pos.is_empty() {
            return Err(Error::InvalidInput(format!(
                "anchor {i} (label {}) has no positive in the batch",
                labels[i]
            )));
        }
        let inv = 1.0 / pos.len() as f64;
        let logp = log_softmax_row(z, i, tau);
        loss -= inv * pos.iter().map(|&p| logp[p]).sum::<f64>();

        let mut g: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        g[i] = 0.0;
        for &p in &pos {
            g[p] -= inv;
        }
        accumulate_similarity_grad(z, i, &g, tau, &mut grad);
    }
    Ok((loss, grad))
}

pub fn supervised_contrastive_loss(batch: &ContrastiveBatch, config: &LossConfig) -> Result<f64> {
    scl_value_and_grad(&batch.to_matrix(), batch.labels(), config.temperature).map(|(v, _)| v)
}

/// The self-supervised special case where each view's only positive is its
/// sibling view: elements `2k` and `2k + 1` form a pair.
pub fn self_supervised_contrastive_loss(batch: &ContrastiveBatch, config: &LossConfig) -> Result<f64> {
    check_tau(config.temperature)?;
    if batch.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "self-supervised loss needs view pairs, got {} elements",
            batch.len()
        )));
    }
    let e = batch.embeddings();
    let tau = config.temperature;
    let mut loss = 0.0;
    for i in 0..e.len() {
        let j = i ^ 1;
        let denom: f64 = (0..e.len())
            .filter(|&a| a != i)
            .map(|a| (dot(&e[i], &e[a]) / tau).exp())
            .sum();
        loss -= ((dot(&e[i], &e[j]) / tau).exp() / denom).ln();
    }
    Ok(loss)
}

fn check_pair(teacher: &Matrix, student: &Matrix) -> Result<()> {
    if teacher.shape() != student.shape() {
        return Err(Error::InvalidInput(format!(
            "teacher batch is {}x{}, student batch is {}x{}",
            teacher.rows(),
            teacher.cols(),
            student.rows(),
            student.cols()
        )));
    }
    if teacher.rows() < 2 {
        return Err(Error::InvalidInput("distillation needs at least 2 elements".into()));
    }
    Ok(())
}

/// Value and `∂L/∂Z_student` of
/// `−1/2N Σ_i Σ_{a∈A(i)} P^T(z_i; z_a) log P^S(z_i; z_a)`.
/// The teacher side is treated as a constant.
pub fn distill_value_and_grad(teacher: &Matrix, student: &Matrix, tau: f64) -> Result<(f64, Matrix)> {
    check_tau(tau)?;
    check_pair(teacher, student)?;
    let n = student.rows();
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, student.cols());
    for i in 0..n {
        let log_pt = log_softmax_row(teacher, i, tau);
        let log_ps = log_softmax_row(student, i, tau);
        let mut g = vec![0.0; n];
        for a in (0..n).filter(|&a| a != i) {
            let pt = log_pt[a].exp();
            loss -= pt * log_ps[a];
            g[a] = scale * (log_ps[a].exp() - pt);
        }
        accumulate_similarity_grad(student, i, &g, tau, &mut grad);
    }
    Ok((loss * scale, grad))
}

pub fn distillation_loss(
    teacher_batch: &ContrastiveBatch,
    student_batch: &ContrastiveBatch,
    config: &LossConfig,
) -> Result<f64> {
    distill_value_and_grad(
        &teacher_batch.to_matrix(),
        &student_batch.to_matrix(),
        config.temperature,
    )
    .map(|(v, _)| v)
}

/// `∂L_dis/∂s^S_ia` for every anchor, entries ordered over `A(i)`.
pub fn distillation_logit_gradient(
    teacher_batch: &ContrastiveBatch,
    student_batch: &ContrastiveBatch,
    config: &LossConfig,
) -> Result<Vec<Vec<f64>>> {
    let t = teacher_batch.to_matrix();
    let s = student_batch.to_matrix();
    check_pair(&t, &s)?;
    let n = t.rows() as f64;
    (0..t.rows())
        .map(|i| {
            let pt = similarity_distribution(teacher_batch, i, config)?;
            let ps = similarity_distribution(student_batch, i, config)?;
            Ok(ps.iter().zip(&pt).map(|(s, t)| (s - t) / n).collect())
        })
        .collect()
}

/// Mean entropy of the teacher's similarity distributions, the lower bound
/// of the distillation loss.
pub fn mean_teacher_entropy(teacher_batch: &ContrastiveBatch, config: &LossConfig) -> Result<f64> {
    let n = teacher_batch.len();
    let mut total = 0.0;
    for i in 0..n {
        let p = similarity_distribution(teacher_batch, i, config)?;
        total -= p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Session position: `session` is 1-based, so a teacher exists iff
/// `session > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: usize,
    pub seen_classes: usize,
}

impl SessionInfo {
    pub fn distills(&self) -> bool {
        self.session > 1
    }
}

/// `L_scl + kd_weight · L_dis` on embeddings; the distillation term is
/// present only when `session > 1`.
pub fn encoder_loss_from_embeddings(
    student_batch: &ContrastiveBatch,
    teacher_batch: Option<&ContrastiveBatch>,
    session: SessionInfo,
    config: &LossConfig,
) -> Result<f64> {
    let scl = supervised_contrastive_loss(student_batch, config)?;
    if !session.distills() {
        return Ok(scl);
    }
    let teacher = teacher_batch.ok_or_else(|| {
        Error::InvalidInput(format!("session {} needs a teacher", session.session))
    })?;
    Ok(scl + config.kd_weight * distillation_loss(teacher, student_batch, config)?)
}

/// The encoder training objective for a batch of augmented views.
pub fn encoder_loss(
    views: &[Sample],
    teacher: Option<&FrozenEncoder>,
    student: &EncoderParams,
    session: SessionInfo,
    config: &LossConfig,
) -> Result<f64> {
    let features: Vec<&[f64]> = views.iter().map(|s| &s.features[..]).collect();
    let labels: Vec<usize> = views.iter().map(|s| s.label).collect();
    let student_batch = ContrastiveBatch::new(student.encode_batch(&features)?, labels.clone())?;
    let teacher_batch = match (session.distills(), teacher) {
        (true, Some(t)) => Some(ContrastiveBatch::new(t.encode_batch(&features)?, labels)?),
        (true, None) => {
            return Err(Error::InvalidInput(format!(
                "session {} needs a teacher",
                session.session
            )))
        }
        (false, _) => None,
    };
    encoder_loss_from_embeddings(&student_batch, teacher_batch.as_ref(), session, config)
}

/// Supervised contrastive loss as a tape node over embeddings `z`.
pub fn scl_on_tape(tape: &mut Tape, z: Var, labels: &[usize], config: &LossConfig) -> Result<Var> {
    let (value, grad) = scl_value_and_grad(tape.value(z), labels, config.temperature)?;
    Ok(tape.fused_scalar(value, vec![(z, grad)]))
}

/// Distillation loss as a tape node; `teacher` embeddings are constants.
pub fn distill_on_tape(tape: &mut Tape, teacher: &Matrix, z: Var, config: &LossConfig) -> Result<Var> {
    let (value, grad) = distill_value_and_grad(teacher, tape.value(z), config.temperature)?;
    Ok(tape.fused_scalar(value, vec![(z, grad)]))
}

/// Builds the encoder objective on `tape` for the views in `inputs`.
pub fn encoder_objective(
    tape: &mut Tape,
    vars: &EncoderVars,
    inputs: &Matrix,
    labels: &[usize],
    teacher: Option<&Matrix>,
    session: SessionInfo,
    config: &LossConfig,
) -> Result<Var> {
    let x = tape.leaf(inputs.clone());
    let z = vars.embed(tape, x);
    let scl = scl_on_tape(tape, z, labels, config)?;
    if !session.distills() {
        return Ok(scl);
    }
    let teacher = teacher.ok_or_else(|| {
        Error::InvalidInput(format!("session {} needs a teacher", session.session))
    })?;
    let dis = distill_on_tape(tape, teacher, z, config)?;
    let dis = tape.scale(dis, config.kd_weight);
    Ok(tape.add(scl, dis))
}

/// Mean softmax cross-entropy and its gradient with respect to `logits`.
/// `targets[r]` is a column index.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> (f64, Matrix) {
    assert_eq!(logits.rows(), targets.len());
    let n = logits.rows().max(1) as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let probs = softmax(logits.row(r));
        loss -= probs[t].max(f64::MIN_POSITIVE).ln() / n;
        for (c, p) in probs.into_iter().enumerate() {
            let y = if c == t { 1.0 } else { 0.0 };
            grad.set(r, c, (p - y) / n);
        }
    }
    (loss, grad)
}

/// Cross-entropy between temperature-softened teacher and student
/// distributions over the first `old` logit columns, averaged over rows.
/// Returns the gradient with respect to the full student logit matrix.
pub fn logit_distillation(student: &Matrix, teacher: &Matrix, old: usize, temperature: f64) -> (f64, Matrix) {
    assert_eq!(student.rows(), teacher.rows());
    let n = student.rows().max(1) as f64;
    let mut grad = Matrix::zeros(student.rows(), student.cols());
    let mut loss = 0.0;
    if old == 0 {
        return (0.0, grad);
    }
    for r in 0..student.rows() {
        let s: Vec<f64> = student.row(r)[..old].iter().map(|v| v / temperature).collect();
        let t: Vec<f64> = teacher.row(r)[..old].iter().map(|v| v / temperature).collect();
        let ps = softmax(&s);
        let pt = softmax(&t);
        for c in 0..old {
            loss -= pt[c] * ps[c].max(f64::MIN_POSITIVE).ln() / n;
            grad.set(r, c, (ps[c] - pt[c]) / (temperature * n));
        }
    }
    (loss, grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
