//! Fully connected softmax classifier on frozen embeddings.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::Row;
use crate::error::{Error, Result};
use crate::losses::{softmax, softmax_cross_entropy};
use crate::matrix::{dot, Matrix};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_epochs() -> usize {
    500
}

fn default_lr() -> f64 {
    0.001
}

fn default_batch() -> usize {
    512
}

impl Default for FcConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
        }
    }
}

/// One affine layer over `classes` (ascending); row `k` of `weight` scores
/// `classes[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcClassifier {
    classes: Vec<usize>,
    weight: Matrix,
    bias: Vec<f64>,
}

impl FcClassifier {
    pub fn zeros(mut classes: Vec<usize>, dim: usize) -> Self {
        classes.sort_unstable();
        classes.dedup();
        let c = classes.len();
        Self {
            classes,
            weight: Matrix::zeros(c, dim),
            bias: vec![0.0; c],
        }
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

/// Trains from zero weights with Adam on mean cross-entropy; `seed` drives
/// the mini-batch order.
pub fn fcc_fit(rows: &[Row], epochs: usize, lr: f64, seed: u64) -> Result<FcClassifier> {
    fcc_fit_with(
        rows,
        &FcConfig {
            epochs,
            lr,
            ..Default::default()
        },
        seed,
    )
}

pub fn fcc_fit_with(rows: &[Row], config: &FcConfig, seed: u64) -> Result<FcClassifier> {
    let dim = rows
        .first()
        .map(|r| r.0.len())
        .ok_or_else(|| Error::InvalidInput("cannot fit a classifier on no rows".into()))?;
    if rows.iter().any(|r| r.0.len() != dim) {
        return Err(Error::InvalidInput("rows differ in dimension".into()));
    }
    let mut model = FcClassifier::zeros(rows.iter().map(|r| r.1).collect(), dim);
    let targets: Vec<usize> = rows
        .iter()
        .map(|r| model.classes.binary_search(&r.1).expect("class collected"))
        .collect();
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: 0.0,
        ..Default::default()
    });
    let mut rng = rng::stream(seed, streams::FCC);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let x = Matrix::from_rows(&chunk.iter().map(|&i| &rows[i].0[..]).collect::<Vec<_>>());
            let t: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let mut logits = x.matmul_t(&model.weight);
            for r in 0..logits.rows() {
                for (v, b) in logits.row_mut(r).iter_mut().zip(&model.bias) {
                    *v += b;
                }
            }
            let (loss, dlogits) = softmax_cross_entropy(&logits, &t);
            if !loss.is_finite() {
                return Err(Error::Numerical("classifier loss is not finite".into()));
            }
            let dw = dlogits.t_matmul(&x);
            let mut db = vec![0.0; model.bias.len()];
            for r in dlogits.iter_rows() {
                for (acc, v) in db.iter_mut().zip(r) {
                    *acc += v;
                }
            }
            adam.begin_step();
            adam.update(0, model.weight.as_mut_slice(), dw.as_slice());
            adam.update(1, &mut model.bias, &db);
        }
    }
    Ok(model)
}

/// Argmax logit; ties go to the lowest class id.
pub fn fcc_predict(model: &FcClassifier, embedding: &[f64]) -> Result<usize> {
    if embedding.len() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "classifier expects {} features, got {}",
            model.dim(),
            embedding.len()
        )));
    }
    let logits = model.logits(embedding);
    let mut best = 0;
    for (k, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = k;
        }
    }
    Ok(model.classes[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_predicts_lowest_class() {
        let m = FcClassifier::zeros(vec![4, 2, 9], 3);
        assert_eq!(fcc_predict(&m, &[0.3, -1.0, 2.0]).unwrap(), 2);
        let p = m.probabilities(&[1.0, 1.0, 1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_data_is_learned() {
        let rows: Vec<Row> = (0..20)
            .map(|i| {
                let c = i % 2;
                let s = if c == 0 { -1.0 } else { 1.0 };
                (vec![s * (0.5 + i as f64 * 0.01), 0.1 * (i as f64).sin()], c)
            })
            .collect();
        let m = fcc_fit(&rows, 500, 0.01, 1).unwrap();
        for (x, y) in &rows {
            assert_eq!(fcc_predict(&m, x).unwrap(), *y);
            let p = m.probabilities(x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(fcc_fit(&[], 1, 0.1, 0).is_err());
    }

    #[test]
    fn argmax_ignores_logit_shift() {
        let mut m = FcClassifier::zeros(vec![0, 1, 2], 2);
        m.weight = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]);
        let x = [0.2, 0.7];
        let before = fcc_predict(&m, &x).unwrap();
        m.bias = vec![5.0; 3];
        assert_eq!(fcc_predict(&m, &x).unwrap(), before);
    }
}
