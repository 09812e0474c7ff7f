//! Replay memory: per-class quotas, prioritized exemplar selection and the
//! fixed-budget buffer.
//!
//! Greedy selectors score candidate `x` at step `k` by
//! `‖μ − (φ(x) + Σ_{j<k} φ(p_j)) / k‖`, where `μ` is the class mean of all
//! embeddings. Marginal selection (MES) takes the argmax, herding the argmin.
//! Selected candidates leave the pool and ties go to the lowest index, so
//! every selection is a prioritized list: its length-`m'` prefix is the
//! selection for `m'`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::encoder::Encode;
use crate::error::{Error, Result};

/// `⌈K / t⌉`
pub fn per_class_quota(capacity: usize, seen_classes: usize) -> usize {
    assert!(capacity >= 1 && seen_classes >= 1, "quota needs K >= 1 and t >= 1");
    capacity.div_ceil(seen_classes)
}

/// Arithmetic mean of the embeddings, without renormalization.
pub fn class_mean<V: AsRef<[f64]>>(embeddings: &[V]) -> Result<Vec<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::InvalidInput("class mean of an empty set".into()))?;
    let d = first.as_ref().len();
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; d];
    for e in embeddings {
        let e = e.as_ref();
        if e.len() != d {
            return Err(Error::InvalidInput("embeddings differ in dimension".into()));
        }
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extreme {
    Farthest,
    Nearest,
}

/// Greedy prioritized selection of `m` indices from the candidates not in
/// `taken`, scored against `mean`.
fn greedy_order<V: AsRef<[f64]>>(
    embeddings: &[V],
    mean: &[f64],
    m: usize,
    extreme: Extreme,
    taken: &mut [bool],
) -> Vec<usize> {
    let d = mean.len();
    let mut running = vec![0.0; d];
    let mut order = Vec::with_capacity(m);
    for k in 1..=m {
        let inv_k = 1.0 / k as f64;
        let mut best: Option<(usize, f64)> = None;
        for (idx, e) in embeddings.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let dist_sq: f64 = mean
                .iter()
                .zip(&running)
                .zip(e.as_ref())
                .map(|((mu, s), x)| {
                    let diff = mu - (x + s) * inv_k;
                    diff * diff
                })
                .sum();
            let better = match best {
                None => true,
                Some((_, b)) => match extreme {
                    Extreme::Farthest => dist_sq > b,
                    Extreme::Nearest => dist_sq < b,
                },
            };
            if better {
                best = Some((idx, dist_sq));
            }
        }
        let Some((idx, _)) = best else { break };
        taken[idx] = true;
        for (s, x) in running.iter_mut().zip(embeddings[idx].as_ref()) {
            *s += x;
        }
        order.push(idx);
    }
    order
}

fn check_m(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("exemplar count m must be at least 1".into()));
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "cannot select {m} exemplars from {n} samples"
        )));
    }
    Ok(())
}

/// Marginal selection order over raw embeddings.
pub fn mes_order<V: AsRef<[f64]>>(embeddings: &[V], m: usize) -> Result<Vec<usize>> {
    check_m(m, embeddings.len())?;
    let mean = class_mean(embeddings)?;
    Ok(greedy_order(embeddings, &mean, m, Extreme::Farthest, &mut vec![false; embeddings.len()]))
}

/// Herding selection order over raw embeddings.
pub fn herding_order<V: AsRef<[f64]>>(embeddings: &[V], m: usize) -> Result<Vec<usize>> {
    check_m(m, embeddings.len())?;
    let mean = class_mean(embeddings)?;
    Ok(greedy_order(embeddings, &mean, m, Extreme::Nearest, &mut vec![false; embeddings.len()]))
}

/// `⌈m/2⌉` herding picks, then `⌊m/2⌋` marginal picks from the remaining
/// pool. The marginal block restarts its running mean at `k = 1`.
pub fn mixed_order<V: AsRef<[f64]>>(embeddings: &[V], m: usize) -> Result<Vec<usize>> {
    check_m(m, embeddings.len())?;
    let mean = class_mean(embeddings)?;
    let mut taken = vec![false; embeddings.len()];
    let mut order = greedy_order(embeddings, &mean, m.div_ceil(2), Extreme::Nearest, &mut taken);
    order.extend(greedy_order(embeddings, &mean, m / 2, Extreme::Farthest, &mut taken));
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    #[default]
    Mes,
    Herding,
    Random,
    Mixed,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [
        SelectionStrategy::Mes,
        SelectionStrategy::Herding,
        SelectionStrategy::Random,
        SelectionStrategy::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionStrategy::Mes => "mes",
            SelectionStrategy::Herding => "herding",
            SelectionStrategy::Random => "random",
            SelectionStrategy::Mixed => "mixed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The prioritized exemplars of one class. `source_indices[k]` is the
/// position of `exemplars[k]` in the class sample list it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub class_id: usize,
    pub exemplars: Vec<Sample>,
    pub source_indices: Vec<usize>,
}

impl ExemplarSet {
    fn from_order(class_samples: &[Sample], order: Vec<usize>) -> Self {
        ExemplarSet {
            class_id: class_samples[0].label,
            exemplars: order.iter().map(|&i| class_samples[i].clone()).collect(),
            source_indices: order,
        }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    /// The first `m` exemplars.
    pub fn truncated(&self, m: usize) -> ExemplarSet {
        let m = m.min(self.len());
        ExemplarSet {
            class_id: self.class_id,
            exemplars: self.exemplars[..m].to_vec(),
            source_indices: self.source_indices[..m].to_vec(),
        }
    }
}

fn check_class(class_samples: &[Sample]) -> Result<()> {
    let first = class_samples
        .first()
        .ok_or_else(|| Error::InvalidInput("no samples to select exemplars from".into()))?;
    if class_samples.iter().any(|s| s.label != first.label) {
        return Err(Error::InvalidInput(
            "exemplar selection expects samples of a single class".into(),
        ));
    }
    Ok(())
}

fn embed_class(class_samples: &[Sample], encoder: &impl Encode) -> Result<Vec<Vec<f64>>> {
    let features: Vec<&[f64]> = class_samples.iter().map(|s| &s.features[..]).collect();
    Ok(encoder
        .encode_batch(&features)?
        .into_iter()
        .map(|e| e.into_vec())
        .collect())
}

pub fn select_exemplars_mes(class_samples: &[Sample], encoder: &impl Encode, m: usize) -> Result<ExemplarSet> {
    check_class(class_samples)?;
    check_m(m, class_samples.len())?;
    let order = mes_order(&embed_class(class_samples, encoder)?, m)?;
    Ok(ExemplarSet::from_order(class_samples, order))
}

pub fn select_exemplars_herding(class_samples: &[Sample], encoder: &impl Encode, m: usize) -> Result<ExemplarSet> {
    check_class(class_samples)?;
    check_m(m, class_samples.len())?;
    let order = herding_order(&embed_class(class_samples, encoder)?, m)?;
    Ok(ExemplarSet::from_order(class_samples, order))
}

/// Uniform sample without replacement, in draw order.
pub fn select_exemplars_random<R: Rng + ?Sized>(class_samples: &[Sample], m: usize, rng: &mut R) -> Result<ExemplarSet> {
    check_class(class_samples)?;
    check_m(m, class_samples.len())?;
    let order = index::sample(rng, class_samples.len(), m).into_vec();
    Ok(ExemplarSet::from_order(class_samples, order))
}

pub fn select_exemplars_mixed(class_samples: &[Sample], encoder: &impl Encode, m: usize) -> Result<ExemplarSet> {
    check_class(class_samples)?;
    check_m(m, class_samples.len())?;
    let order = mixed_order(&embed_class(class_samples, encoder)?, m)?;
    Ok(ExemplarSet::from_order(class_samples, order))
}

/// Dispatches on `strategy`; `rng` is only consumed by random selection.
pub fn select_exemplars<R: Rng + ?Sized>(
    strategy: SelectionStrategy,
    class_samples: &[Sample],
    encoder: &impl Encode,
    m: usize,
    rng: &mut R,
) -> Result<ExemplarSet> {
    match strategy {
        SelectionStrategy::Mes => select_exemplars_mes(class_samples, encoder, m),
        SelectionStrategy::Herding => select_exemplars_herding(class_samples, encoder, m),
        SelectionStrategy::Random => select_exemplars_random(class_samples, m, rng),
        SelectionStrategy::Mixed => select_exemplars_mixed(class_samples, encoder, m),
    }
}

/// Exemplar sets for every seen class under a total budget `capacity`.
/// With ceiling quotas the total may exceed `capacity` by up to `t − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    capacity: usize,
    sets: Vec<ExemplarSet>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            sets: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sets(&self) -> &[ExemplarSet] {
        &self.sets
    }

    pub fn classes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.class_id).collect()
    }

    pub fn get(&self, class_id: usize) -> Option<&ExemplarSet> {
        self.sets.iter().find(|s| s.class_id == class_id)
    }

    pub fn total_exemplars(&self) -> usize {
        self.sets.iter().map(ExemplarSet::len).sum()
    }

    /// Every stored exemplar, set by set.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.sets.iter().flat_map(|s| s.exemplars.iter())
    }

    /// Writes `class_id,rank,f0..` with rank starting at 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let dim = self.samples().next().map_or(0, |s| s.dim());
        let mut write = || -> std::io::Result<()> {
            let cols: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
            write!(out, "class_id,rank")?;
            for c in &cols {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
            for set in &self.sets {
                for (rank, s) in set.exemplars.iter().enumerate() {
                    write!(out, "{},{}", set.class_id, rank + 1)?;
                    for v in &s.features {
                        write!(out, ",{v:?}")?;
                    }
                    writeln!(out)?;
                }
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Truncates every set to its first `new_m` exemplars.
pub fn reduce_exemplar_sets(buffer: &MemoryBuffer, new_m: usize) -> MemoryBuffer {
    MemoryBuffer {
        capacity: buffer.capacity,
        sets: buffer.sets.iter().map(|s| s.truncated(new_m)).collect(),
    }
}

/// Appends the sets of newly seen classes to the reduced old buffer.
pub fn construct_buffer(old: &MemoryBuffer, new_class_sets: Vec<ExemplarSet>) -> Result<MemoryBuffer> {
    let mut sets = old.sets.clone();
    for set in new_class_sets {
        if sets.iter().any(|s| s.class_id == set.class_id) {
            return Err(Error::InvalidInput(format!(
                "class {} already has an exemplar set",
                set.class_id
            )));
        }
        sets.push(set);
    }
    Ok(MemoryBuffer {
        capacity: old.capacity,
        sets,
    })
}
