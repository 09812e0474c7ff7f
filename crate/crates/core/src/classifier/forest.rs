//! Balanced random forest: every tree sees a class-balanced bootstrap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Grower, Row, TreeNode};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// Candidate features per split; `⌈√d⌉` when absent.
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
}

fn default_trees() -> usize {
    100
}

fn default_min_leaf() -> usize {
    1
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: default_trees(),
            mtry: None,
            min_leaf: default_min_leaf(),
        }
    }
}

pub fn default_mtry(dim: usize) -> usize {
    ((dim as f64).sqrt().ceil() as usize).clamp(1, dim.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedForest {
    trees: Vec<TreeNode>,
    mtry: usize,
    dim: usize,
    seed: u64,
    /// Per tree, `(class, rows drawn)` of its bootstrap sample.
    bootstrap_counts: Vec<Vec<(usize, usize)>>,
}

impl BalancedForest {
    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bootstrap_counts(&self) -> &[Vec<(usize, usize)>] {
        &self.bootstrap_counts
    }

    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad forest document: {e}")))
    }
}

fn rows_by_class(rows: &[Row]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_class.entry(r.1).or_default().push(i);
    }
    by_class
}

/// Indices of a balanced bootstrap: every class contributes `n_min` draws
/// with replacement, where `n_min` is the size of the smallest class.
pub fn balanced_bootstrap_indices<R: Rng + ?Sized>(rows: &[Row], rng: &mut R) -> Result<Vec<usize>> {
    let by_class = rows_by_class(rows);
    if by_class.len() < 2 {
        return Err(Error::InvalidInput(
            "balanced bootstrap needs at least two classes".into(),
        ));
    }
    let n_min = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(n_min * by_class.len());
    for members in by_class.values() {
        for _ in 0..n_min {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(out)
}

pub fn balanced_bootstrap<R: Rng + ?Sized>(rows: &[Row], rng: &mut R) -> Result<Vec<Row>> {
    Ok(balanced_bootstrap_indices(rows, rng)?
        .into_iter()
        .map(|i| rows[i].clone())
        .collect())
}

pub fn brf_fit(rows: &[Row], n_trees: usize, mtry: usize, seed: u64) -> Result<BalancedForest> {
    brf_fit_with(
        rows,
        &ForestConfig {
            n_trees,
            mtry: Some(mtry),
            min_leaf: 1,
        },
        seed,
    )
}

/// Grows `n_trees` trees in parallel. Tree `i` draws from its own stream
/// derived from `(seed, i)`, so the forest does not depend on scheduling.
pub fn brf_fit_with(rows: &[Row], config: &ForestConfig, seed: u64) -> Result<BalancedForest> {
    if config.n_trees == 0 {
        return Err(Error::InvalidInput("forest needs at least one tree".into()));
    }
    let dim = rows
        .first()
        .map(|r| r.0.len())
        .ok_or_else(|| Error::InvalidInput("cannot fit a forest on no rows".into()))?;
    if rows_by_class(rows).len() < 2 {
        return Err(Error::InvalidInput(
            "balanced random forest needs at least two classes".into(),
        ));
    }
    let mtry = config.mtry.unwrap_or_else(|| default_mtry(dim));

    let grown: Vec<(TreeNode, Vec<(usize, usize)>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(rng::derive_seed(seed, i as u64), streams::FOREST);
            let mut idx = balanced_bootstrap_indices(rows, &mut rng)?;
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &j in &idx {
                *counts.entry(rows[j].1).or_default() += 1;
            }
            let mut grower = Grower::new(rows, mtry, config.min_leaf, &mut rng)?;
            let tree = grower.grow(&mut idx);
            Ok((tree, counts.into_iter().collect()))
        })
        .collect::<Result<_>>()?;

    let (trees, bootstrap_counts) = grown.into_iter().unzip();
    Ok(BalancedForest {
        trees,
        mtry,
        dim,
        seed,
        bootstrap_counts,
    })
}

/// Most frequent value; ties go to the lowest class id.
pub fn mode_lowest(votes: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (class, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((class, count));
        }
    }
    best.map(|(class, _)| class)
}

pub fn brf_predict(forest: &BalancedForest, embedding: &[f64]) -> Result<usize> {
    if embedding.len() != forest.dim {
        return Err(Error::InvalidInput(format!(
            "forest expects {} features, got {}",
            forest.dim,
            embedding.len()
        )));
    }
    Ok(mode_lowest(&forest.votes(embedding)).expect("forest has trees"))
}
