//! From-scratch dense feed-forward classifiers in two variants:
//!
//! - **FNN** — ReLU activations, standard dropout, Glorot-uniform init
//! - **SNN** — SELU activations, alpha dropout, LeCun-uniform init
//!
//! Both expose exact backpropagation gradients with respect to parameters
//! (training) and inputs (attack crafting). Attack-facing gradients are
//! always computed in infer mode: attacks target the deployed decision
//! function, not the stochastic training-time one.

pub mod activations;
pub mod dropout;
mod train;

pub use activations::{loss_cross_entropy, relu, selu, softmax, Activation, SELU_ALPHA, SELU_LAMBDA};
pub use dropout::{dropout_forward, DropoutKind, DropoutSample, Mode};
pub use train::{accuracy_on, train, Optimizer, TrainConfig, TrainHistory};

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid model/train config: {0}")]
    InvalidConfig(String),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Network flavour; fixes activation, dropout kind, and initializer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fnn,
    Snn,
}

impl Variant {
    pub fn activation(self) -> Activation {
        match self {
            Variant::Fnn => Activation::Relu,
            Variant::Snn => Activation::Selu,
        }
    }

    pub fn dropout_kind(self) -> DropoutKind {
        match self {
            Variant::Fnn => DropoutKind::Standard,
            Variant::Snn => DropoutKind::Alpha,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fnn => "fnn",
            Variant::Snn => "snn",
        }
    }
}

/// Architecture and initialization recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub dropout_rate: f64,
    /// Apply a dropout layer after the softmax output during training
    /// (unusual; off by default).
    pub dropout_after_output: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Three hidden layers of 16 units, dropout 0.1.
    pub fn new(variant: Variant, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            variant,
            input_dim,
            hidden_layers: 3,
            hidden_width: 16,
            output_dim,
            dropout_rate: 0.1,
            dropout_after_output: false,
            seed,
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        if self.hidden_layers < 1 {
            return Err(NetError::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.input_dim < 1 || self.hidden_width < 1 || self.output_dim < 2 {
            return Err(NetError::InvalidConfig(
                "input_dim/hidden_width >= 1 and output_dim >= 2 required".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::InvalidRate(self.dropout_rate));
        }
        Ok(())
    }

    /// Per-layer (fan_in, fan_out) pairs, input to output.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }
}

/// One dense layer: weights are `[fan_in × fan_out]`, bias `[fan_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &x) in input.iter().enumerate() {
            let row = self.weights.row(i);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        out
    }
}

/// Parameter-shaped gradient bundle.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub layers: Vec<Dense>,
}

/// Uniform initializer bound for one layer of the given variant.
pub fn init_bound(variant: Variant, fan_in: usize, fan_out: usize) -> f64 {
    match variant {
        // Glorot uniform.
        Variant::Fnn => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        // LeCun uniform.
        Variant::Snn => (3.0 / fan_in as f64).sqrt(),
    }
}

/// A dense classifier; immutable and shareable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Dense>,
    trained: bool,
    train_seed: Option<u64>,
}

struct ForwardTrace {
    /// Activation vector entering each layer; `inputs[0]` is x.
    inputs: Vec<Vec<f64>>,
    /// Per hidden layer: pre-activation and the realized dropout.
    hidden: Vec<(Vec<f64>, DropoutSample)>,
    probs: Vec<f64>,
    /// What the loss sees (softmax output, possibly dropped out).
    loss_probs: Vec<f64>,
    output_drop: Option<DropoutSample>,
}

impl Model {
    /// Variant-specific uniform weight init, zero biases, deterministic
    /// under the config seed.
    pub fn init(cfg: &ModelConfig) -> Result<Model, NetError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = cfg
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = init_bound(cfg.variant, fan_in, fan_out);
                let mut weights = Matrix::zeros(fan_in, fan_out);
                for v in weights.data_mut() {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
                }
                Dense {
                    weights,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Model {
            config: cfg.clone(),
            layers,
            trained: false,
            train_seed: None,
        })
    }

    /// Build from explicit layers (probe models, tests). The result counts
    /// as trained: the caller chose the weights deliberately.
    pub fn from_layers(cfg: &ModelConfig, layers: Vec<Dense>) -> Result<Model, NetError> {
        cfg.validate()?;
        let shapes = cfg.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(NetError::InvalidConfig(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (layer, (fan_in, fan_out)) in layers.iter().zip(shapes) {
            if layer.weights.rows() != fan_in
                || layer.weights.cols() != fan_out
                || layer.bias.len() != fan_out
            {
                return Err(NetError::InvalidConfig("layer shape mismatch".into()));
            }
            if !layer.weights.all_finite() || !layer.bias.iter().all(|b| b.is_finite()) {
                return Err(NetError::InvalidConfig("non-finite parameters".into()));
            }
        }
        Ok(Model {
            config: cfg.clone(),
            layers,
            trained: true,
            train_seed: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn train_seed(&self) -> Option<u64> {
        self.train_seed
    }

    pub(crate) fn mark_trained(&mut self, seed: u64) {
        self.trained = true;
        self.train_seed = Some(seed);
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.config.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.config.input_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(())
    }

    fn forward_trace(
        &self,
        x: &[f64],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardTrace, NetError> {
        self.check_input(x)?;
        let p = self.config.dropout_rate;
        let kind = self.config.variant.dropout_kind();
        let act = self.config.variant.activation();
        // Infer mode never consumes randomness.
        let mut infer_rng = ChaCha8Rng::seed_from_u64(0);
        let rng = match (mode, rng) {
            (Mode::Train, Some(r)) => r,
            (Mode::Train, None) => {
                return Err(NetError::InvalidConfig(
                    "train-mode forward needs an RNG".into(),
                ))
            }
            (Mode::Infer, _) => &mut infer_rng,
        };

        let hidden_count = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden = Vec::with_capacity(hidden_count);
        let mut current = x.to_vec();
        for layer in &self.layers[..hidden_count] {
            inputs.push(current.clone());
            let z = layer.apply(&current);
            let activated: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            let dropped = dropout_forward(&activated, p, mode, kind, rng)?;
            current = dropped.output.clone();
            hidden.push((z, dropped));
        }
        inputs.push(current.clone());
        let logits = self.layers[hidden_count].apply(&current);
        let probs = softmax(&logits);
        let (loss_probs, output_drop) = if self.config.dropout_after_output && mode == Mode::Train
        {
            let dropped = dropout_forward(&probs, p, mode, kind, rng)?;
            (dropped.output.clone(), Some(dropped))
        } else {
            (probs.clone(), None)
        };
        Ok(ForwardTrace {
            inputs,
            hidden,
            probs,
            loss_probs,
            output_drop,
        })
    }

    /// Backpropagate loss through the realized trace. Returns parameter
    /// gradients, the gradient with respect to the input, and the loss.
    fn backward(&self, trace: &ForwardTrace, y_onehot: &[f64]) -> (ParamGrads, Vec<f64>, f64) {
        let loss = loss_cross_entropy(&trace.loss_probs, y_onehot);
        let act = self.config.variant.activation();

        // Gradient at the logits. The plain softmax + cross-entropy pair
        // collapses to probs - y; the output-dropout path needs the full
        // softmax Jacobian.
        let mut delta: Vec<f64> = match &trace.output_drop {
            None => trace
                .probs
                .iter()
                .zip(y_onehot)
                .map(|(&p, &y)| p - y)
                .collect(),
            Some(drop) => {
                let dloss_dout: Vec<f64> = trace
                    .loss_probs
                    .iter()
                    .zip(y_onehot)
                    .map(|(&lp, &y)| if lp > 1e-12 { -y / lp } else { 0.0 })
                    .collect();
                let dloss_dprob: Vec<f64> = dloss_dout
                    .iter()
                    .zip(&drop.dscale)
                    .map(|(&g, &s)| g * s)
                    .collect();
                let inner: f64 = dloss_dprob
                    .iter()
                    .zip(&trace.probs)
                    .map(|(&g, &p)| g * p)
                    .collect::<Vec<f64>>()
                    .iter()
                    .sum();
                trace
                    .probs
                    .iter()
                    .zip(&dloss_dprob)
                    .map(|(&p, &g)| p * (g - inner))
                    .collect()
            }
        };

        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut grad_input = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let grad = &mut grads[l];
            for (i, &a) in input.iter().enumerate() {
                let row = grad.weights.row_mut(i);
                for (w, &d) in row.iter_mut().zip(&delta) {
                    *w = a * d;
                }
            }
            grad.bias.copy_from_slice(&delta);

            // Push delta through the weights to the layer input.
            let mut back = vec![0.0; input.len()];
            for (i, b) in back.iter_mut().enumerate() {
                let row = self.layers[l].weights.row(i);
                *b = row.iter().zip(&delta).map(|(&w, &d)| w * d).sum();
            }
            if l == 0 {
                grad_input = back;
            } else {
                let (z, dropped) = &trace.hidden[l - 1];
                delta = back
                    .iter()
                    .zip(&dropped.dscale)
                    .zip(z)
                    .map(|((&b, &s), &zv)| b * s * act.derivative(zv))
                    .collect();
            }
        }
        (ParamGrads { layers: grads }, grad_input, loss)
    }

    /// Class probabilities in infer mode.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_trace(x, Mode::Infer, None)?.probs)
    }

    /// Row-wise probabilities for a batch.
    pub fn forward_batch(&self, batch: &Matrix) -> Result<Matrix, NetError> {
        let mut out = Matrix::zeros(batch.rows(), self.config.output_dim);
        for (i, row) in batch.iter_rows().enumerate() {
            let probs = self.forward(row)?;
            out.row_mut(i).copy_from_slice(&probs);
        }
        Ok(out)
    }

    /// Argmax class; ties break toward the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, NetError> {
        let probs = self.forward(x)?;
        Ok(argmax(&probs))
    }

    pub fn predict_batch(&self, batch: &Matrix) -> Result<Vec<usize>, NetError> {
        batch.iter_rows().map(|row| self.predict(row)).collect()
    }

    /// Exact loss gradients with respect to every weight and bias
    /// (infer mode: dropout disabled).
    pub fn grad_params(&self, x: &[f64], y_onehot: &[f64]) -> Result<ParamGrads, NetError> {
        self.check_target(y_onehot)?;
        let trace = self.forward_trace(x, Mode::Infer, None)?;
        Ok(self.backward(&trace, y_onehot).0)
    }

    /// Exact loss gradient with respect to the input (infer mode); the
    /// quantity every gradient-sign attack consumes.
    pub fn grad_input(&self, x: &[f64], y_onehot: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_target(y_onehot)?;
        let trace = self.forward_trace(x, Mode::Infer, None)?;
        Ok(self.backward(&trace, y_onehot).1)
    }

    /// Infer-mode loss of a single example.
    pub fn loss(&self, x: &[f64], y_onehot: &[f64]) -> Result<f64, NetError> {
        self.check_target(y_onehot)?;
        let trace = self.forward_trace(x, Mode::Infer, None)?;
        Ok(loss_cross_entropy(&trace.loss_probs, y_onehot))
    }

    /// Train-mode step pieces: gradients and loss under live dropout.
    pub(crate) fn backprop_train(
        &self,
        x: &[f64],
        y_onehot: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(ParamGrads, f64), NetError> {
        self.check_target(y_onehot)?;
        let trace = self.forward_trace(x, Mode::Train, Some(rng))?;
        let (grads, _, loss) = self.backward(&trace, y_onehot);
        Ok((grads, loss))
    }

    fn check_target(&self, y_onehot: &[f64]) -> Result<(), NetError> {
        if y_onehot.len() != self.config.output_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.config.output_dim,
                actual: y_onehot.len(),
            });
        }
        Ok(())
    }

    /// Serialize to the checkpoint JSON document.
    pub fn to_json(&self) -> Result<String, NetError> {
        let ckpt = Checkpoint {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    weights: l.weights.to_nested(),
                    bias: l.bias.clone(),
                })
                .collect(),
            selu: SeluConstants {
                lambda: SELU_LAMBDA,
                alpha: SELU_ALPHA,
            },
            train_seed: self.train_seed,
        };
        Ok(serde_json::to_string_pretty(&ckpt)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Model, NetError> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        let layers = ckpt
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if l.weights.iter().any(|r| r.len() != cols) {
                    return Err(NetError::BadCheckpoint("ragged weight rows".into()));
                }
                Ok(Dense {
                    weights: Matrix::from_vec(rows, cols, l.weights.into_iter().flatten().collect()),
                    bias: l.bias,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut model = Model::from_layers(&ckpt.config, layers)
            .map_err(|e| NetError::BadCheckpoint(e.to_string()))?;
        model.train_seed = ckpt.train_seed;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, NetError> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical checkpoint serialization.
    pub fn checkpoint_hash(&self) -> Result<String, NetError> {
        let json = self.to_json()?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// First maximal index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    layers: Vec<CheckpointLayer>,
    selu: SeluConstants,
    train_seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SeluConstants {
    lambda: f64,
    alpha: f64,
}
