//! MLP feature extractor producing unit-norm embeddings.

use std::fs;
use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::optim::Adam;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl EncoderConfig {
    /// Two hidden layers of 64 units and a 16-dimensional embedding.
    pub fn with_defaults(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 64],
            embed_dim: 16,
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("encoder.input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config(
                "encoder.hidden_dims must be a nonempty list of positive widths".into(),
            ));
        }
        if self.embed_dim < 2 {
            return Err(Error::Config("encoder.embed_dim must be at least 2".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.embed_dim)) {
            dims.push((h, fan_in));
            fan_in = h;
        }
        dims
    }
}

/// One affine layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    config: EncoderConfig,
    layers: Vec<Layer>,
}

/// Gradient of a scalar loss with respect to every encoder parameter, laid
/// out like [`EncoderParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl ParamGrads {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A unit-norm feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `v`; the zero vector maps to the first basis vector.
    pub fn normalized(mut v: Vec<f64>) -> Self {
        let n = matrix::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
            if let Some(first) = v.first_mut() {
                *first = 1.0;
            }
        }
        Embedding(v)
    }

    /// Wraps a vector that is already unit norm (within 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let n = matrix::norm(&v);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("embedding norm {n} is not 1")));
        }
        Ok(Embedding(v))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Anything that maps feature vectors to embeddings.
pub trait Encode {
    fn input_dim(&self) -> usize;

    fn embed_dim(&self) -> usize;

    fn encode(&self, features: &[f64]) -> Result<Embedding>;

    fn encode_batch<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<Vec<Embedding>> {
        batch.iter().map(|v| self.encode(v.as_ref())).collect()
    }
}

/// Weights `N(0, 1) / √fan_in`, zero biases.
pub fn init_encoder(config: &EncoderConfig) -> Result<EncoderParams> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, streams::ENCODER_INIT);
    let layers = config
        .layer_dims()
        .into_iter()
        .map(|(out, fan_in)| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            let data = (0..out * fan_in)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect();
            Layer {
                weight: Matrix::from_vec(out, fan_in, data),
                bias: vec![0.0; out],
            }
        })
        .collect();
    Ok(EncoderParams {
        config: config.clone(),
        layers,
    })
}

impl EncoderParams {
    /// Builds parameters from explicit layers, checking shapes against the
    /// config.
    pub fn from_layers(config: EncoderConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::InvalidInput(format!(
                "config implies {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (i, ((out, fan_in), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.weight.shape() != (*out, *fan_in) || layer.bias.len() != *out {
                return Err(Error::InvalidInput(format!(
                    "layer {i}: expected weight {out}x{fan_in} and bias {out}, got {}x{} and {}",
                    layer.weight.rows(),
                    layer.weight.cols(),
                    layer.bias.len()
                )));
            }
            if !layer.weight.all_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numerical(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Pre-normalization output for a batch of rows.
    fn forward_raw(&self, inputs: &Matrix) -> Matrix {
        let last = self.layers.len() - 1;
        let mut h = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = h.matmul_t(&layer.weight);
            for r in 0..next.rows() {
                for (v, b) in next.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                    if i != last {
                        *v = match self.config.activation {
                            Activation::Relu => v.max(0.0),
                            Activation::Tanh => v.tanh(),
                        };
                    }
                }
            }
            h = next;
        }
        h
    }

    /// Embeds every row of `inputs` at once.
    pub fn encode_matrix(&self, inputs: &Matrix) -> Result<Vec<Embedding>> {
        if inputs.cols() != self.config.input_dim {
            return Err(Error::InvalidInput(format!(
                "input has {} features, encoder expects {}",
                inputs.cols(),
                self.config.input_dim
            )));
        }
        Ok(self
            .forward_raw(inputs)
            .iter_rows()
            .map(|r| Embedding::normalized(r.to_vec()))
            .collect())
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone());
                let b = tape.leaf(Matrix::from_vec(1, l.bias.len(), l.bias.clone()));
                (w, b)
            })
            .collect();
        EncoderVars {
            layers,
            activation: self.config.activation,
        }
    }

    /// Plain gradient step `θ ← θ − lr·g`.
    pub fn sgd_step(&self, grads: &ParamGrads, lr: f64) -> EncoderParams {
        let mut next = self.clone();
        for (layer, g) in next.layers.iter_mut().zip(&grads.layers) {
            for (p, d) in layer.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
                *p -= lr * d;
            }
            for (p, d) in layer.bias.iter_mut().zip(&g.bias) {
                *p -= lr * d;
            }
        }
        next
    }

    /// One Adam update, returning the new parameters.
    pub fn adam_step(&self, grads: &ParamGrads, adam: &mut Adam) -> EncoderParams {
        let mut next = self.clone();
        adam.begin_step();
        for (i, (layer, g)) in next.layers.iter_mut().zip(&grads.layers).enumerate() {
            adam.update(2 * i, layer.weight.as_mut_slice(), g.weight.as_slice());
            adam.update(2 * i + 1, &mut layer.bias, &g.bias);
        }
        next
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("encoder params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: EncoderParams = serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("bad encoder checkpoint: {e}")))?;
        Self::from_layers(raw.config, raw.layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Encode for EncoderParams {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Forward pass, then L2 normalization. A zero pre-normalization output
    /// maps to the first basis vector.
    fn encode(&self, features: &[f64]) -> Result<Embedding> {
        if features.len() != self.config.input_dim {
            return Err(Error::InvalidInput(format!(
                "input has {} features, encoder expects {}",
                features.len(),
                self.config.input_dim
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input contains non-finite values".into()));
        }
        let x = Matrix::from_vec(1, features.len(), features.to_vec());
        Ok(Embedding::normalized(self.forward_raw(&x).into_vec()))
    }

    fn encode_batch<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<Vec<Embedding>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        for (i, v) in batch.iter().enumerate() {
            if v.as_ref().len() != self.config.input_dim {
                return Err(Error::InvalidInput(format!(
                    "batch element {i} has {} features, encoder expects {}",
                    v.as_ref().len(),
                    self.config.input_dim
                )));
            }
        }
        self.encode_matrix(&Matrix::from_rows(batch))
    }
}

/// Encoder parameters as tape leaves.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl EncoderVars {
    /// Differentiable forward pass producing row-normalized embeddings.
    pub fn embed(&self, tape: &mut Tape, inputs: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut h = inputs;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul_t(h, w);
            h = tape.add_bias(h, b);
            if i != last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        tape.normalize_rows(h)
    }

    /// Every parameter leaf in layer order, weights before biases.
    pub fn leaves(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    pub fn collect(&self, grads: &crate::autodiff::Gradients) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|&(w, b)| Layer {
                    weight: grads.wrt(w),
                    bias: grads.wrt(b).into_vec(),
                })
                .collect(),
        }
    }
}

/// Loss value and exact parameter gradients of the scalar built by
/// `loss_evaluator` on a fresh tape holding `params`.
pub fn value_and_gradients<F>(params: &EncoderParams, loss_evaluator: F) -> Result<(f64, ParamGrads)>
where
    F: FnOnce(&mut Tape, &EncoderVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let root = loss_evaluator(&mut tape, &vars)?;
    let loss = tape.scalar(root);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {loss}")));
    }
    let grads = tape.backward(root);
    Ok((loss, vars.collect(&grads)))
}

/// Reverse-mode gradients of a scalar loss with respect to every encoder
/// parameter.
pub fn gradients<F>(params: &EncoderParams, loss_evaluator: F) -> Result<ParamGrads>
where
    F: FnOnce(&mut Tape, &EncoderVars) -> Result<Var>,
{
    value_and_gradients(params, loss_evaluator).map(|(_, g)| g)
}

/// A frozen copy of encoder parameters. Only forward passes are exposed.
#[derive(Debug, Clone)]
pub struct FrozenEncoder(Arc<EncoderParams>);

impl FrozenEncoder {
    pub fn params(&self) -> &EncoderParams {
        &self.0
    }
}

impl Encode for FrozenEncoder {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    fn embed_dim(&self) -> usize {
        self.0.embed_dim()
    }

    fn encode(&self, features: &[f64]) -> Result<Embedding> {
        self.0.encode(features)
    }

    fn encode_batch<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<Vec<Embedding>> {
        self.0.encode_batch(batch)
    }
}

/// Deep copy used as the distillation teacher.
pub fn snapshot_teacher(params: &EncoderParams) -> FrozenEncoder {
    FrozenEncoder(Arc::new(params.clone()))
}
