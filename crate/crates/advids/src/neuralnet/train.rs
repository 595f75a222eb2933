//! Mini-batch training with SGD or Adam, seeded shuffling, and a
//! stratified validation split carved from the training data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{encode_one_hot, stratified_split, Dataset};
use crate::matrix::Matrix;
use crate::seeds;

use super::{Dense, Model, NetError, ParamGrads};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Training hyperparameters. Defaults: Adam, lr 1e-3, batch 256, 20
/// epochs, 10% validation split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, ds: &Dataset) -> Result<(), NetError> {
        if self.epochs < 1 {
            return Err(NetError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NetError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NetError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NetError::InvalidConfig(
                "validation_fraction must lie in (0, 1)".into(),
            ));
        }
        if ds.n() < self.batch_size {
            return Err(NetError::InvalidConfig(format!(
                "dataset has {} rows, smaller than batch_size {}",
                ds.n(),
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Per-epoch loss curves; lengths equal the epochs actually run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct AdamState {
    m: Vec<Dense>,
    v: Vec<Dense>,
    step: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(model: &mut Model, grads: &ParamGrads, lr: f64, adam: &mut Option<AdamState>) {
    match adam {
        None => {
            for (layer, grad) in model.layers_mut().iter_mut().zip(&grads.layers) {
                for (w, g) in layer.weights.data_mut().iter_mut().zip(grad.weights.data()) {
                    *w -= lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                    *b -= lr * g;
                }
            }
        }
        Some(state) => {
            state.step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
            for (((layer, grad), m), v) in model
                .layers_mut()
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                };
                for ((w, &g), (mw, vw)) in layer
                    .weights
                    .data_mut()
                    .iter_mut()
                    .zip(grad.weights.data())
                    .zip(m.weights.data_mut().iter_mut().zip(v.weights.data_mut()))
                {
                    update(w, g, mw, vw);
                }
                for ((b, &g), (mb, vb)) in layer
                    .bias
                    .iter_mut()
                    .zip(&grad.bias)
                    .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
                {
                    update(b, g, mb, vb);
                }
            }
        }
    }
}

fn accumulate(sum: &mut ParamGrads, part: &ParamGrads) {
    for (dst, src) in sum.layers.iter_mut().zip(&part.layers) {
        for (a, b) in dst.weights.data_mut().iter_mut().zip(src.weights.data()) {
            *a += b;
        }
        for (a, b) in dst.bias.iter_mut().zip(&src.bias) {
            *a += b;
        }
    }
}

fn scale(grads: &mut ParamGrads, factor: f64) {
    for layer in &mut grads.layers {
        for w in layer.weights.data_mut() {
            *w *= factor;
        }
        for b in &mut layer.bias {
            *b *= factor;
        }
    }
}

/// Mini-batch gradient descent for `tc.epochs`, single-threaded and
/// bit-deterministic under the seed. Returns the trained model and the
/// per-epoch loss history.
pub fn train(mut model: Model, ds: &Dataset, tc: &TrainConfig) -> Result<(Model, TrainHistory), NetError> {
    tc.validate(ds)?;
    if ds.num_classes() != model.config().output_dim {
        return Err(NetError::InvalidConfig(format!(
            "dataset has {} classes, model outputs {}",
            ds.num_classes(),
            model.config().output_dim
        )));
    }
    if ds.dim() != model.config().input_dim {
        return Err(NetError::DimensionMismatch {
            expected: model.config().input_dim,
            actual: ds.dim(),
        });
    }

    let onehot: Matrix = encode_one_hot(ds.labels(), ds.num_classes())
        .map_err(|e| NetError::InvalidConfig(e.to_string()))?;
    let (mut train_idx, val_idx) = stratified_split(
        ds.labels(),
        ds.num_classes(),
        tc.validation_fraction,
        seeds::derive(tc.seed, "validation-split"),
    );

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(tc.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seeds::derive(tc.seed, "dropout"));
    let mut adam = match tc.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => Some(AdamState {
            m: model.layers().iter().map(Dense::zeros_like).collect(),
            v: model.layers().iter().map(Dense::zeros_like).collect(),
            step: 0,
        }),
    };

    let mut history = TrainHistory::default();
    for epoch in 0..tc.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(tc.batch_size) {
            let mut grads = ParamGrads {
                layers: model.layers().iter().map(Dense::zeros_like).collect(),
            };
            for &i in batch {
                let (g, loss) =
                    model.backprop_train(ds.features().row(i), onehot.row(i), &mut dropout_rng)?;
                accumulate(&mut grads, &g);
                loss_sum += loss;
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            apply_update(&mut model, &grads, tc.learning_rate, &mut adam);
        }
        let train_loss = loss_sum / train_idx.len() as f64;

        let mut val_sum = 0.0;
        for &i in &val_idx {
            val_sum += model.loss(ds.features().row(i), onehot.row(i))?;
        }
        let val_loss = val_sum / val_idx.len().max(1) as f64;

        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(NetError::DivergenceDetected {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
    }

    model.mark_trained(tc.seed);
    Ok((model, history))
}

/// Fraction of rows the model labels correctly.
pub fn accuracy_on(model: &Model, ds: &Dataset) -> Result<f64, NetError> {
    let preds = model.predict_batch(ds.features())?;
    let correct = preds
        .iter()
        .zip(ds.labels())
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / ds.n().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SyntheticSpec;
    use crate::neuralnet::{ModelConfig, Variant};

    fn blob_dataset(seed: u64) -> Dataset {
        use crate::dataio::{apply_normalization, fit_normalizer};
        let raw = SyntheticSpec::blobs(2, &[120, 120], 4, 4.0, seed).generate().unwrap();
        let stats = fit_normalizer(&raw).unwrap();
        apply_normalization(&raw, &stats).unwrap()
    }

    fn small_tc() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 5e-3,
            optimizer: Optimizer::Adam,
            validation_fraction: 0.1,
            seed: 3,
        }
    }

    #[test]
    fn fits_separable_blobs() {
        for variant in [Variant::Fnn, Variant::Snn] {
            let ds = blob_dataset(1);
            let cfg = ModelConfig::new(variant, ds.dim(), ds.num_classes(), 11);
            let model = Model::init(&cfg).unwrap();
            let (trained, history) = train(model, &ds, &small_tc()).unwrap();
            assert!(trained.is_trained());
            assert_eq!(history.train_loss.len(), 20);
            assert_eq!(history.val_loss.len(), 20);
            let acc = accuracy_on(&trained, &ds).unwrap();
            assert!(acc >= 0.99, "{variant:?} accuracy {acc}");
            assert!(
                history.train_loss.last().unwrap() < history.train_loss.first().unwrap(),
                "loss should decrease"
            );
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let ds = blob_dataset(2);
        let cfg = ModelConfig::new(Variant::Fnn, ds.dim(), ds.num_classes(), 1);
        let model = Model::init(&cfg).unwrap();
        let tc = TrainConfig {
            epochs: 0,
            ..small_tc()
        };
        assert!(matches!(
            train(model, &ds, &tc),
            Err(NetError::InvalidConfig(_))
        ));
    }

    #[test]
    fn batch_larger_than_dataset_rejected() {
        let ds = blob_dataset(2);
        let cfg = ModelConfig::new(Variant::Fnn, ds.dim(), ds.num_classes(), 1);
        let model = Model::init(&cfg).unwrap();
        let tc = TrainConfig {
            batch_size: 10_000,
            ..small_tc()
        };
        assert!(train(model, &ds, &tc).is_err());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let ds = blob_dataset(4);
        let cfg = ModelConfig::new(Variant::Snn, ds.dim(), ds.num_classes(), 8);
        let tc = TrainConfig {
            epochs: 5,
            ..small_tc()
        };
        let (a, ha) = train(Model::init(&cfg).unwrap(), &ds, &tc).unwrap();
        let (b, hb) = train(Model::init(&cfg).unwrap(), &ds, &tc).unwrap();
        assert_eq!(a.layers(), b.layers());
        assert_eq!(ha, hb);
        assert_eq!(a.train_seed(), Some(tc.seed));
    }

    #[test]
    fn sgd_also_learns() {
        let ds = blob_dataset(5);
        let cfg = ModelConfig::new(Variant::Fnn, ds.dim(), ds.num_classes(), 2);
        let tc = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.05,
            epochs: 30,
            ..small_tc()
        };
        let (trained, _) = train(Model::init(&cfg).unwrap(), &ds, &tc).unwrap();
        assert!(accuracy_on(&trained, &ds).unwrap() >= 0.95);
    }
}
