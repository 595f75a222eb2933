//! Staged execution of the pipeline through on-disk artifacts, so CI can
//! cache trained checkpoints between attack runs:
//!
//! - [`stage_train`] writes splits, stats, checkpoints, and histories
//! - [`stage_attack`] reads them and writes adversarial CSVs + sidecars
//! - [`stage_evaluate`] scores everything into the same report `run`
//!   produces in memory
//!
//! Artifact layout under the output directory:
//!
//! ```text
//! schema.json  fingerprint.json  histories.json  report.json
//! data/{regime}_train.csv   data/{regime}_test.csv
//! stats/{regime}.json
//! checkpoints/{variant}_{regime}_seed{N}.json
//! adversarial/{variant}_{regime}_seed{N}_{method}.csv (+ .meta.json)
//! ```

use std::path::{Path, PathBuf};

use crate::attacks::{run_attack, save_batch, AttackSidecar};
use crate::dataio::{load_csv, write_csv, FeatureSchema, FeatureStats};
use crate::metrics::evaluate;
use crate::neuralnet::{train, Model, TrainConfig, Variant};

use super::{
    build_attack_config, fingerprint, init_seed, load_splits, prepare_regime, run_jobs,
    train_seed, Cell, Condition, DatasetFingerprint, ExperimentConfig, ExperimentError,
    ExperimentReport, HistoryEntry, Regime,
};

fn checkpoint_path(dir: &Path, variant: Variant, regime: Regime, seed: u64) -> PathBuf {
    dir.join("checkpoints")
        .join(format!("{}_{}_seed{}.json", variant.name(), regime.name(), seed))
}

fn adversarial_base(dir: &Path, variant: Variant, regime: Regime, seed: u64, method: &str) -> PathBuf {
    dir.join("adversarial").join(format!(
        "{}_{}_seed{}_{}",
        variant.name(),
        regime.name(),
        seed,
        method
    ))
}

fn require(path: PathBuf) -> Result<PathBuf, ExperimentError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(ExperimentError::MissingArtifact(path))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<T, ExperimentError> {
    let path = require(path)?;
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Train every (variant, regime, seed) model and persist the artifacts
/// later stages consume.
pub fn stage_train(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    for sub in ["data", "stats", "checkpoints"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }

    let (train_ds, test_ds, desc, hash) = load_splits(cfg)?;
    let fp = fingerprint(&train_ds, &test_ds, desc, hash);
    std::fs::write(dir.join("fingerprint.json"), serde_json::to_string_pretty(&fp)?)?;
    std::fs::write(
        dir.join("schema.json"),
        serde_json::to_string_pretty(train_ds.schema())?,
    )?;

    let mut jobs = Vec::new();
    for regime in cfg.regimes() {
        let data = prepare_regime(regime, &train_ds, &test_ds)?;
        write_csv(&data.train, dir.join("data").join(format!("{}_train.csv", regime.name())))?;
        write_csv(&data.test, dir.join("data").join(format!("{}_test.csv", regime.name())))?;
        data.stats
            .save(dir.join("stats").join(format!("{}.json", regime.name())))?;
        for &seed in &cfg.seeds {
            for variant in cfg.variants() {
                jobs.push((seed, regime, variant));
            }
        }
    }

    // Re-prepare per job rather than sharing: jobs only need the regime's
    // training split, and the preparation is cheap next to training.
    let histories = run_jobs(&jobs, cfg.threads, |&(seed, regime, variant)| {
        let data = prepare_regime(regime, &train_ds, &test_ds)?;
        let model_cfg = cfg.net_spec(variant).to_model_config(
            variant,
            data.train.dim(),
            data.train.num_classes(),
            init_seed(seed, variant, regime),
        );
        let tc = TrainConfig {
            seed: train_seed(seed, variant, regime),
            ..cfg.train.clone()
        };
        let (model, history) = train(Model::init(&model_cfg)?, &data.train, &tc)
            .map_err(ExperimentError::from)
            .map_err(|e| e.in_cell(variant, regime, seed))?;
        model.save(checkpoint_path(dir, variant, regime, seed))?;
        Ok(HistoryEntry {
            variant,
            regime,
            seed,
            history,
        })
    })?;
    std::fs::write(dir.join("histories.json"), serde_json::to_string_pretty(&histories)?)?;
    Ok(())
}

/// Craft adversarial CSVs from the stage-train artifacts.
pub fn stage_attack(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir.join("adversarial"))?;
    let schema: FeatureSchema = read_json(dir.join("schema.json"))?;

    let mut jobs = Vec::new();
    for regime in cfg.regimes() {
        for &seed in &cfg.seeds {
            for variant in cfg.variants() {
                jobs.push((seed, regime, variant));
            }
        }
    }
    run_jobs(&jobs, cfg.threads, |&(seed, regime, variant)| {
        let test_path = require(dir.join("data").join(format!("{}_test.csv", regime.name())))?;
        let (test, _) = load_csv(&test_path, &schema)?;
        let stats = FeatureStats::load(require(
            dir.join("stats").join(format!("{}.json", regime.name())),
        )?)?;
        let model = Model::load(require(checkpoint_path(dir, variant, regime, seed))?)?;
        for condition in Condition::ATTACKS {
            let Some(spec) = cfg.attacks.spec_for(condition) else {
                continue;
            };
            let attack_cfg = build_attack_config(spec, regime, &stats, seed, condition);
            let batch = run_attack(
                condition.attack_kind().expect("attack condition"),
                &model,
                test.features(),
                test.labels(),
                &attack_cfg,
            )
            .map_err(ExperimentError::from)
            .map_err(|e| e.in_cell(variant, regime, seed))?;
            let base = adversarial_base(dir, variant, regime, seed, condition.name());
            save_batch(
                &batch,
                &schema,
                regime == Regime::Normalized,
                &model,
                base.with_extension("csv"),
                base.with_extension("meta.json"),
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Score clean and adversarial splits into the final report.
pub fn stage_evaluate(
    cfg: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    let schema: FeatureSchema = read_json(dir.join("schema.json"))?;
    let fp: DatasetFingerprint = read_json(dir.join("fingerprint.json"))?;
    let histories: Vec<HistoryEntry> = read_json(dir.join("histories.json"))?;

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for regime in cfg.regimes() {
            let test_path = require(dir.join("data").join(format!("{}_test.csv", regime.name())))?;
            let (test, _) = load_csv(&test_path, &schema)?;
            for variant in cfg.variants() {
                let model = Model::load(require(checkpoint_path(dir, variant, regime, seed))?)?;
                let preds = model
                    .predict_batch(test.features())
                    .map_err(ExperimentError::from)
                    .map_err(|e| e.in_cell(variant, regime, seed))?;
                cells.push(Cell {
                    variant,
                    regime,
                    condition: Condition::Clean,
                    seed,
                    report: evaluate(test.labels(), &preds, &schema.class_names)?,
                    attack_config: None,
                });
                for condition in Condition::ATTACKS {
                    if cfg.attacks.spec_for(condition).is_none() {
                        continue;
                    }
                    let base = adversarial_base(dir, variant, regime, seed, condition.name());
                    let (adv, _) = load_csv(require(base.with_extension("csv"))?, &schema)?;
                    let sidecar: AttackSidecar = read_json(base.with_extension("meta.json"))?;
                    let preds = model
                        .predict_batch(adv.features())
                        .map_err(ExperimentError::from)
                        .map_err(|e| e.in_cell(variant, regime, seed))?;
                    cells.push(Cell {
                        variant,
                        regime,
                        condition,
                        seed,
                        report: evaluate(adv.labels(), &preds, &schema.class_names)?,
                        attack_config: Some(sidecar.config),
                    });
                }
            }
        }
    }

    let report = ExperimentReport {
        config: cfg.clone(),
        dataset: fp,
        cells,
        histories,
    };
    report.save(dir.join("report.json"))?;
    Ok(report)
}
