//! Classifiers trained on exemplar embeddings.

mod fcc;
mod forest;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use fcc::{fcc_fit, fcc_fit_with, fcc_predict, FcClassifier, FcConfig};
pub use forest::{
    balanced_bootstrap, balanced_bootstrap_indices, brf_fit, brf_fit_with, brf_predict,
    default_mtry, mode_lowest, BalancedForest, ForestConfig,
};
pub use tree::{cart_grow, Row, TreeNode};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Brf,
    Fcc,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 2] = [ClassifierKind::Brf, ClassifierKind::Fcc];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Brf => "brf",
            ClassifierKind::Fcc => "fcc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedClassifier {
    Forest(BalancedForest),
    Fc(FcClassifier),
    /// Only one class has been seen; every input gets that class.
    Constant(usize),
}

impl TrainedClassifier {
    pub fn predict(&self, embedding: &[f64]) -> Result<usize> {
        match self {
            TrainedClassifier::Forest(f) => brf_predict(f, embedding),
            TrainedClassifier::Fc(m) => fcc_predict(m, embedding),
            TrainedClassifier::Constant(c) => Ok(*c),
        }
    }
}
