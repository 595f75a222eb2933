//! White-box L∞ evasion attacks: FGSM, BIM, and PGD.
//!
//! All three consume the model's input gradient in infer mode and keep
//! every perturbed row inside both the ε-ball around its origin and the
//! per-feature clip bounds. `sign(0) = 0`: coordinates with zero gradient
//! are never perturbed.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{encode_one_hot, DataError, Dataset, FeatureSchema, FeatureStats};
use crate::matrix::Matrix;
use crate::neuralnet::{Model, NetError};
use crate::seeds;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("invalid attack config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Attack method selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Bim,
    Pgd,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
        }
    }

    pub const ALL: [AttackKind; 3] = [AttackKind::Fgsm, AttackKind::Bim, AttackKind::Pgd];
}

/// L∞ budget, step schedule, and clipping region shared by all attacks.
///
/// `epsilon` is expressed in normalized-feature units. For raw-feature
/// runs, `feature_scale` stretches the budget per feature (typically to
/// the training min-max span) so budgets stay comparable across regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub clip_min: Vec<f64>,
    pub clip_max: Vec<f64>,
    #[serde(default)]
    pub random_start: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub feature_scale: Option<Vec<f64>>,
}

impl AttackConfig {
    /// Budget over the unit box `[0,1]^dim`: step ε/10, 10 iterations.
    pub fn unit_box(epsilon: f64, dim: usize) -> Self {
        Self {
            epsilon,
            step_size: epsilon / 10.0,
            iterations: 10,
            clip_min: vec![0.0; dim],
            clip_max: vec![1.0; dim],
            random_start: false,
            seed: 0,
            feature_scale: None,
        }
    }

    /// Raw-feature budget: clips at the training per-feature extrema and
    /// scales ε by each feature span.
    pub fn from_stats(epsilon: f64, stats: &FeatureStats) -> Self {
        Self {
            epsilon,
            step_size: epsilon / 10.0,
            iterations: 10,
            clip_min: stats.min.clone(),
            clip_max: stats.max.clone(),
            random_start: false,
            seed: 0,
            feature_scale: Some(stats.ranges()),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), AttackError> {
        let fail = |msg: String| Err(AttackError::ConfigInvalid(msg));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon {} must be finite and >= 0", self.epsilon));
        }
        if !(self.step_size >= 0.0) || self.step_size > self.epsilon {
            return fail(format!(
                "step_size {} must lie in [0, epsilon={}]",
                self.step_size, self.epsilon
            ));
        }
        if self.iterations < 1 {
            return fail("iterations must be >= 1".into());
        }
        if self.clip_min.len() != dim || self.clip_max.len() != dim {
            return fail(format!(
                "clip bounds have dim {}/{}, expected {dim}",
                self.clip_min.len(),
                self.clip_max.len()
            ));
        }
        for j in 0..dim {
            if self.clip_min[j] > self.clip_max[j] {
                return fail(format!("clip_min[{j}] > clip_max[{j}]"));
            }
        }
        if let Some(scale) = &self.feature_scale {
            if scale.len() != dim {
                return fail(format!("feature_scale has dim {}, expected {dim}", scale.len()));
            }
            if scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return fail("feature_scale entries must be finite and >= 0".into());
            }
        }
        Ok(())
    }

    /// Per-feature (ε, step) after applying the scale.
    fn effective(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match &self.feature_scale {
            None => (vec![self.epsilon; dim], vec![self.step_size; dim]),
            Some(scale) => (
                scale.iter().map(|s| self.epsilon * s).collect(),
                scale.iter().map(|s| self.step_size * s).collect(),
            ),
        }
    }
}

/// Perturbation direction of one gradient coordinate; zero stays put.
pub fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Project one candidate onto the intersection of the ε-ball around
/// `origin` and the clip box, coordinate-wise.
pub fn project_linf(
    candidate: &[f64],
    origin: &[f64],
    epsilon: f64,
    clip_min: &[f64],
    clip_max: &[f64],
) -> Vec<f64> {
    candidate
        .iter()
        .zip(origin)
        .zip(clip_min.iter().zip(clip_max))
        .map(|((&c, &o), (&lo, &hi))| project_coord(c, o, epsilon, lo, hi))
        .collect()
}

fn project_coord(candidate: f64, origin: f64, epsilon: f64, lo: f64, hi: f64) -> f64 {
    candidate
        .max(origin - epsilon)
        .max(lo)
        .min(origin + epsilon)
        .min(hi)
}

/// Originals, perturbed rows, and the provenance of one attack run.
#[derive(Clone, Debug)]
pub struct AdversarialBatch {
    pub originals: Matrix,
    pub perturbed: Matrix,
    pub labels: Vec<usize>,
    pub attack: AttackKind,
    pub config: AttackConfig,
}

impl AdversarialBatch {
    /// View the perturbed rows as a dataset under the given schema.
    pub fn to_dataset(&self, schema: &FeatureSchema, normalized: bool) -> Result<Dataset, DataError> {
        Dataset::new(
            self.perturbed.clone(),
            self.labels.clone(),
            schema.clone(),
            normalized,
        )
    }

    /// Largest |x' − x| over all rows and features.
    pub fn max_deviation(&self) -> f64 {
        self.originals
            .data()
            .iter()
            .zip(self.perturbed.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sidecar metadata written next to an adversarial CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackSidecar {
    pub attack: AttackKind,
    pub config: AttackConfig,
    pub model_checkpoint_hash: String,
}

/// Persist the perturbed rows as CSV plus a JSON sidecar naming the
/// attack, its config, and the checkpoint hash of the attacked model.
pub fn save_batch(
    batch: &AdversarialBatch,
    schema: &FeatureSchema,
    normalized: bool,
    model: &Model,
    csv_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<(), AttackError> {
    let ds = batch.to_dataset(schema, normalized)?;
    crate::dataio::write_csv(&ds, csv_path)?;
    let sidecar = AttackSidecar {
        attack: batch.attack,
        config: batch.config.clone(),
        model_checkpoint_hash: model.checkpoint_hash()?,
    };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn check_inputs(model: &Model, x: &Matrix, y: &[usize], cfg: &AttackConfig) -> Result<(), AttackError> {
    if !model.is_trained() {
        return Err(AttackError::UntrainedModel);
    }
    let dim = model.config().input_dim;
    if x.cols() != dim {
        return Err(AttackError::Net(NetError::DimensionMismatch {
            expected: dim,
            actual: x.cols(),
        }));
    }
    if x.rows() != y.len() {
        return Err(AttackError::ConfigInvalid(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    cfg.validate(dim)?;
    for (r, row) in x.iter_rows().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < cfg.clip_min[j] - 1e-9 || v > cfg.clip_max[j] + 1e-9 {
                return Err(AttackError::ConfigInvalid(format!(
                    "input row {r} feature {j} = {v} outside clip bounds"
                )));
            }
        }
    }
    Ok(())
}

fn craft(
    model: &Model,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
    kind: AttackKind,
) -> Result<AdversarialBatch, AttackError> {
    check_inputs(model, x, y, cfg)?;
    let dim = x.cols();
    let k = model.config().output_dim;
    let onehot = encode_one_hot(y, k)?;
    let (eps, step) = cfg.effective(dim);
    // FGSM is the single full-budget step.
    let (iterations, step): (usize, &[f64]) = match kind {
        AttackKind::Fgsm => (1, &eps),
        AttackKind::Bim | AttackKind::Pgd => (cfg.iterations, &step),
    };

    let mut perturbed = Matrix::zeros(x.rows(), dim);
    for r in 0..x.rows() {
        let origin = x.row(r);
        let target = onehot.row(r);
        let mut current: Vec<f64> = origin.to_vec();

        if kind == AttackKind::Pgd && cfg.random_start {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &format!("pgd-start-{r}")));
            for (j, v) in current.iter_mut().enumerate() {
                let noise = (rng.random::<f64>() * 2.0 - 1.0) * eps[j];
                *v = project_coord(*v + noise, origin[j], eps[j], cfg.clip_min[j], cfg.clip_max[j]);
            }
        }

        for _ in 0..iterations {
            let grad = model.grad_input(&current, target)?;
            for (j, v) in current.iter_mut().enumerate() {
                let candidate = *v + step[j] * sign(grad[j]);
                *v = project_coord(candidate, origin[j], eps[j], cfg.clip_min[j], cfg.clip_max[j]);
            }
        }
        perturbed.row_mut(r).copy_from_slice(&current);
    }
    Ok(AdversarialBatch {
        originals: x.clone(),
        perturbed,
        labels: y.to_vec(),
        attack: kind,
        config: cfg.clone(),
    })
}

/// One full-budget step along the gradient sign: `x' = clip(x + ε·sign(∇ₓL))`.
pub fn fgsm(
    model: &Model,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    craft(model, x, y, cfg, AttackKind::Fgsm)
}

/// Iterated small steps, re-projected onto the ε-ball and clip box after
/// every update.
pub fn bim(
    model: &Model,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    craft(model, x, y, cfg, AttackKind::Bim)
}

/// Same iteration as BIM with an explicit ε-ball projection; optional
/// uniform random start inside the ball (off by default).
pub fn pgd(
    model: &Model,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    craft(model, x, y, cfg, AttackKind::Pgd)
}

/// Dispatch by kind.
pub fn run_attack(
    kind: AttackKind,
    model: &Model,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<AdversarialBatch, AttackError> {
    craft(model, x, y, cfg, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{Dense, ModelConfig, Variant};
    use proptest::prelude::*;

    /// Two-feature pass-through model: identity hidden + identity output,
    /// so probs = softmax(x) and grad wrt x is softmax(x) − y.
    fn passthrough_model() -> Model {
        let cfg = ModelConfig {
            variant: Variant::Fnn,
            input_dim: 2,
            hidden_layers: 1,
            hidden_width: 2,
            output_dim: 2,
            dropout_rate: 0.0,
            dropout_after_output: false,
            seed: 0,
        };
        let identity = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        Model::from_layers(
            &cfg,
            vec![
                Dense {
                    weights: identity.clone(),
                    bias: vec![0.0; 2],
                },
                Dense {
                    weights: identity,
                    bias: vec![0.0; 2],
                },
            ],
        )
        .unwrap()
    }

    fn trained_blob_model(seed: u64) -> (Model, crate::dataio::Dataset) {
        use crate::dataio::{apply_normalization, fit_normalizer, SyntheticSpec};
        use crate::neuralnet::{train, TrainConfig};
        let ds = SyntheticSpec::blobs(2, &[100, 100], 4, 2.0, seed).generate().unwrap();
        let stats = fit_normalizer(&ds).unwrap();
        let ds = apply_normalization(&ds, &stats).unwrap();
        let cfg = ModelConfig::new(Variant::Fnn, ds.dim(), ds.num_classes(), seed);
        let tc = TrainConfig {
            epochs: 40,
            batch_size: 25,
            learning_rate: 3e-3,
            seed,
            ..TrainConfig::default()
        };
        let (model, _) = train(Model::init(&cfg).unwrap(), &ds, &tc).unwrap();
        (model, ds)
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign(3.2), 1.0);
        assert_eq!(sign(-0.4), -1.0);
        assert_eq!(sign(0.0), 0.0);
    }

    #[test]
    fn project_linf_hand_cases() {
        // Inside all bounds: unchanged.
        let out = project_linf(&[0.4], &[0.5], 0.2, &[0.0], &[1.0]);
        assert_eq!(out, vec![0.4]);
        // Epsilon binds before clip.
        let out = project_linf(&[1.5], &[0.5], 0.2, &[0.0], &[1.0]);
        assert_eq!(out, vec![0.7]);
        // Clip binds before epsilon.
        let out = project_linf(&[-0.3], &[0.0], 0.5, &[0.0], &[1.0]);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let model = passthrough_model();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let cfg = AttackConfig {
            epsilon: 0.0,
            step_size: 0.0,
            ..AttackConfig::unit_box(0.0, 2)
        };
        let batch = fgsm(&model, &x, &[1], &cfg).unwrap();
        assert_eq!(batch.perturbed.row(0), x.row(0));
    }

    #[test]
    fn fgsm_follows_gradient_signs() {
        // softmax([0.5, 0.5]) = [0.5, 0.5]; y = class 1 gives gradient
        // signs (+, -) so the attack adds ε to the first feature and
        // subtracts it from the second.
        let model = passthrough_model();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let cfg = AttackConfig::unit_box(0.1, 2);
        let batch = fgsm(&model, &x, &[1], &cfg).unwrap();
        assert!((batch.perturbed.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((batch.perturbed.get(0, 1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fgsm_does_not_overshoot_clip() {
        let model = passthrough_model();
        // First feature already at clip_max and its gradient is positive.
        let x = Matrix::from_rows(&[vec![1.0, 0.2]]);
        let cfg = AttackConfig::unit_box(0.1, 2);
        let batch = fgsm(&model, &x, &[1], &cfg).unwrap();
        assert_eq!(batch.perturbed.get(0, 0), 1.0);
    }

    #[test]
    fn bim_with_one_full_step_equals_fgsm() {
        let (model, ds) = trained_blob_model(5);
        let x = ds.features().select_rows(&[0, 50, 120, 199]);
        let y: Vec<usize> = [0, 50, 120, 199].iter().map(|&i| ds.labels()[i]).collect();
        let mut cfg = AttackConfig::unit_box(0.08, ds.dim());
        cfg.step_size = cfg.epsilon;
        cfg.iterations = 1;
        let a = fgsm(&model, &x, &y, &cfg).unwrap();
        let b = bim(&model, &x, &y, &cfg).unwrap();
        assert_eq!(a.perturbed.data(), b.perturbed.data());
    }

    #[test]
    fn bim_stays_within_budget() {
        let (model, ds) = trained_blob_model(6);
        let idx: Vec<usize> = (0..40).collect();
        let x = ds.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let cfg = AttackConfig {
            epsilon: 0.1,
            step_size: 0.04,
            iterations: 10,
            ..AttackConfig::unit_box(0.1, ds.dim())
        };
        let batch = bim(&model, &x, &y, &cfg).unwrap();
        assert!(batch.max_deviation() <= 0.1 + 1e-9);
        for row in batch.perturbed.iter_rows() {
            for &v in row {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn constant_sign_displacement_is_min_of_budget_and_steps() {
        // The pass-through model has constant gradient signs for a fixed
        // label, so after T steps each coordinate moved min(T·α, ε).
        let model = passthrough_model();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        for (steps, step_size, expected) in [(3usize, 0.02f64, 0.06f64), (10, 0.02, 0.1)] {
            let cfg = AttackConfig {
                epsilon: 0.1,
                step_size,
                iterations: steps,
                ..AttackConfig::unit_box(0.1, 2)
            };
            let batch = bim(&model, &x, &[1], &cfg).unwrap();
            assert!(
                (batch.perturbed.get(0, 0) - (0.5 + expected)).abs() < 1e-12,
                "T={steps}"
            );
            assert!((batch.perturbed.get(0, 1) - (0.5 - expected)).abs() < 1e-12);
        }
    }

    #[test]
    fn pgd_without_random_start_equals_bim() {
        let (model, ds) = trained_blob_model(7);
        let idx: Vec<usize> = (0..30).collect();
        let x = ds.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let cfg = AttackConfig::unit_box(0.1, ds.dim());
        let a = bim(&model, &x, &y, &cfg).unwrap();
        let b = pgd(&model, &x, &y, &cfg).unwrap();
        assert_eq!(a.perturbed.data(), b.perturbed.data());
    }

    #[test]
    fn pgd_random_start_stays_in_ball_and_is_seeded() {
        let (model, ds) = trained_blob_model(8);
        let idx: Vec<usize> = (0..25).collect();
        let x = ds.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let cfg = AttackConfig {
            random_start: true,
            seed: 99,
            ..AttackConfig::unit_box(0.1, ds.dim())
        };
        let a = pgd(&model, &x, &y, &cfg).unwrap();
        let b = pgd(&model, &x, &y, &cfg).unwrap();
        assert_eq!(a.perturbed.data(), b.perturbed.data());
        assert!(a.max_deviation() <= 0.1 + 1e-9);

        let zero = AttackConfig {
            epsilon: 0.0,
            step_size: 0.0,
            random_start: true,
            ..AttackConfig::unit_box(0.0, ds.dim())
        };
        let frozen = pgd(&model, &x, &y, &zero).unwrap();
        assert_eq!(frozen.perturbed.data(), frozen.originals.data());
    }

    #[test]
    fn untrained_model_rejected() {
        let cfg = ModelConfig::new(Variant::Fnn, 2, 5, 3);
        let model = Model::init(&cfg).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let err = fgsm(&model, &x, &[0], &AttackConfig::unit_box(0.1, 2));
        assert!(matches!(err, Err(AttackError::UntrainedModel)));
    }

    #[test]
    fn invalid_configs_rejected() {
        let model = passthrough_model();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let mut cfg = AttackConfig::unit_box(0.1, 2);
        cfg.step_size = 0.2; // step beyond epsilon
        assert!(matches!(
            fgsm(&model, &x, &[0], &cfg),
            Err(AttackError::ConfigInvalid(_))
        ));
        let mut cfg = AttackConfig::unit_box(0.1, 2);
        cfg.iterations = 0;
        assert!(fgsm(&model, &x, &[0], &cfg).is_err());
        let mut cfg = AttackConfig::unit_box(0.1, 2);
        cfg.clip_min[0] = 2.0; // crossed bounds
        assert!(fgsm(&model, &x, &[0], &cfg).is_err());
        // Origin outside the clip box.
        let cfg = AttackConfig::unit_box(0.1, 2);
        let outside = Matrix::from_rows(&[vec![1.5, 0.5]]);
        assert!(fgsm(&model, &outside, &[0], &cfg).is_err());
    }

    #[test]
    fn feature_scale_stretches_budget_per_feature() {
        let model = passthrough_model();
        let x = Matrix::from_rows(&[vec![5.0, 5.0]]);
        let cfg = AttackConfig {
            epsilon: 0.1,
            step_size: 0.01,
            iterations: 10,
            clip_min: vec![0.0, 0.0],
            clip_max: vec![10.0, 10.0],
            random_start: false,
            seed: 0,
            feature_scale: Some(vec![10.0, 2.0]),
        };
        let batch = fgsm(&model, &x, &[1], &cfg).unwrap();
        // Effective ε per feature: 1.0 and 0.2, signs (+, −).
        assert!((batch.perturbed.get(0, 0) - 6.0).abs() < 1e-12);
        assert!((batch.perturbed.get(0, 1) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn attacks_degrade_a_good_model() {
        // Direction check at desk scale: every method at ε=0.1 knocks a
        // >=0.9-accuracy blob model down by at least 20 points, and BIM
        // is no weaker than FGSM, on a majority of seeds.
        use crate::neuralnet::accuracy_on;
        let mut votes_drop = [0usize; 3];
        let mut votes_bim_le_fgsm = 0usize;
        let seeds = [11u64, 12, 13];
        for &seed in &seeds {
            let (model, ds) = trained_blob_model(seed);
            let clean = accuracy_on(&model, &ds).unwrap();
            assert!(clean >= 0.9, "seed {seed} clean accuracy {clean}");
            let cfg = AttackConfig::unit_box(0.1, ds.dim());
            let mut attacked = [0.0f64; 3];
            for (slot, kind) in AttackKind::ALL.iter().enumerate() {
                let batch =
                    run_attack(*kind, &model, ds.features(), ds.labels(), &cfg).unwrap();
                let preds = model.predict_batch(&batch.perturbed).unwrap();
                let correct = preds
                    .iter()
                    .zip(ds.labels())
                    .filter(|(p, t)| p == t)
                    .count();
                attacked[slot] = correct as f64 / ds.n() as f64;
                if clean - attacked[slot] >= 0.20 {
                    votes_drop[slot] += 1;
                }
            }
            if attacked[1] <= attacked[0] + 1e-12 {
                votes_bim_le_fgsm += 1;
            }
        }
        let majority = seeds.len() / 2 + 1;
        for (slot, kind) in AttackKind::ALL.iter().enumerate() {
            assert!(
                votes_drop[slot] >= majority,
                "{kind:?} dropped accuracy by >=20 points on {}/{} seeds",
                votes_drop[slot],
                seeds.len()
            );
        }
        assert!(votes_bim_le_fgsm >= majority);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn budget_and_clip_hold_for_random_models(
            model_seed in 0u64..500,
            epsilon in 0.01f64..0.5,
            iterations in 1usize..6,
            rows in 1usize..4,
        ) {
            let cfg = ModelConfig {
                variant: if model_seed % 2 == 0 { Variant::Fnn } else { Variant::Snn },
                input_dim: 3,
                hidden_layers: 2,
                hidden_width: 4,
                output_dim: 3,
                dropout_rate: 0.0,
                dropout_after_output: false,
                seed: model_seed,
            };
            let mut model = Model::init(&cfg).unwrap();
            model.mark_trained(model_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(model_seed ^ 0xabc);
            let mut x = Matrix::zeros(rows, 3);
            for r in 0..rows {
                for c in 0..3 {
                    x.set(r, c, rng.random::<f64>());
                }
            }
            let y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..3usize)).collect();
            let attack_cfg = AttackConfig {
                epsilon,
                step_size: epsilon / iterations as f64,
                iterations,
                random_start: model_seed % 3 == 0,
                seed: model_seed,
                ..AttackConfig::unit_box(epsilon, 3)
            };
            for kind in AttackKind::ALL {
                let batch = run_attack(kind, &model, &x, &y, &attack_cfg).unwrap();
                prop_assert!(batch.max_deviation() <= epsilon + 1e-9);
                for row in batch.perturbed.iter_rows() {
                    for &v in row {
                        prop_assert!((0.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }

    #[test]
    fn fgsm_saturates_unconstrained_nonzero_coordinates() {
        let (model, ds) = trained_blob_model(21);
        let idx: Vec<usize> = (0..50).collect();
        let x = ds.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let eps = 0.07;
        let cfg = AttackConfig::unit_box(eps, ds.dim());
        let onehot = encode_one_hot(&y, ds.num_classes()).unwrap();
        let batch = fgsm(&model, &x, &y, &cfg).unwrap();
        let mut checked = 0usize;
        for r in 0..x.rows() {
            let grad = model.grad_input(x.row(r), onehot.row(r)).unwrap();
            for j in 0..x.cols() {
                let v = x.get(r, j);
                // Unconstrained: the full ε step stays inside the box.
                if grad[j] != 0.0 && v - eps >= 0.0 && v + eps <= 1.0 {
                    let delta = (batch.perturbed.get(r, j) - v).abs();
                    assert!((delta - eps).abs() < 1e-12, "row {r} feature {j}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "no unconstrained coordinates exercised");
    }

    #[test]
    fn save_batch_writes_csv_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let (model, ds) = trained_blob_model(31);
        let idx: Vec<usize> = (0..10).collect();
        let x = ds.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let cfg = AttackConfig::unit_box(0.1, ds.dim());
        let batch = fgsm(&model, &x, &y, &cfg).unwrap();
        let csv = dir.path().join("adv.csv");
        let meta = dir.path().join("adv.meta.json");
        save_batch(&batch, ds.schema(), true, &model, &csv, &meta).unwrap();
        let (loaded, rejected) = crate::dataio::load_csv(&csv, ds.schema()).unwrap();
        assert_eq!(rejected, 0);
        assert_eq!(loaded.n(), 10);
        let sidecar: AttackSidecar =
            serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(sidecar.attack, AttackKind::Fgsm);
        assert_eq!(sidecar.model_checkpoint_hash, model.checkpoint_hash().unwrap());
    }
}
