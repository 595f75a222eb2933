//! Desk-scale lab for studying gradient-based evasion attacks against
//! deep-learning intrusion detection on IoT flow records.
//!
//! The crate trains two dense classifiers over BoT-IoT-style flow features —
//! a ReLU feed-forward network (FNN) and a self-normalizing SELU network
//! (SNN) — crafts white-box FGSM/BIM/PGD adversarial samples against them,
//! and measures degradation under normalized and raw input regimes.
//!
//! ## Modules
//!
//! - [`dataio`] — CSV ingestion, label encoding, min-max normalization,
//!   stratified splitting, and synthetic dataset generation
//! - [`neuralnet`] — from-scratch FNN/SNN models with training and exact
//!   gradients with respect to parameters and inputs
//! - [`attacks`] — L∞ FGSM, BIM, and PGD with per-feature clipping
//! - [`metrics`] — confusion matrix, precision/recall/F1, Cohen's kappa,
//!   and multiclass Matthews correlation
//! - [`experiment`] — end-to-end orchestration producing comparable
//!   per-model × per-condition report grids
//! - [`cli`] — the `advids` command-line front end
//!
//! ## Quick start
//!
//! ```
//! use advids::dataio::SyntheticSpec;
//! use advids::neuralnet::{train, ModelConfig, Model, TrainConfig, Variant};
//!
//! let ds = SyntheticSpec::botiot_mini(7).generate().unwrap();
//! let cfg = ModelConfig::new(Variant::Fnn, ds.dim(), ds.num_classes(), 0);
//! let model = Model::init(&cfg).unwrap();
//! let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
//! let (model, history) = train(model, &ds, &tc).unwrap();
//! assert_eq!(history.train_loss.len(), 1);
//! assert!(model.is_trained());
//! ```
//!
//! Runnable examples covering each capability live in `examples/`; see the
//! README for the catalogue and for the `advids` CLI.

pub mod attacks;
pub mod cli;
pub mod dataio;
pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod neuralnet;

pub(crate) mod seeds;

pub use matrix::Matrix;
