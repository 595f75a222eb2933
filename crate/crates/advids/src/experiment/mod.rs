//! End-to-end orchestration: build both classifiers, train them, evaluate
//! the clean test split, craft FGSM/BIM/PGD samples from it, re-evaluate,
//! and assemble the comparative report grid — optionally under both the
//! normalized and raw input regimes.
//!
//! Every random choice derives from the experiment seed list, so a rerun
//! with an identical config reproduces the report byte for byte.

mod emit;
mod report;
mod stage;

pub use emit::{emit, EmitFormat};
pub use report::{
    compare, Cell, ComparisonSummary, Condition, ConditionDelta, DatasetFingerprint, Degradation,
    DirectionFlag, ExperimentReport, HistoryEntry, Regime,
};
pub use stage::{stage_attack, stage_evaluate, stage_train};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attacks::{run_attack, AttackConfig, AttackError};
use crate::dataio::{
    apply_normalization, clamp_to_stats, fit_normalizer, load_csv, stratified_split,
    stratified_subsample, DataError, Dataset, FeatureStats, SyntheticSpec,
};
use crate::metrics::{evaluate, MetricsError};
use crate::neuralnet::{train, Model, ModelConfig, NetError, TrainConfig, Variant};
use crate::seeds;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("missing report cell: {0}")]
    MissingCell(String),
    #[error("missing artifact {0}; run the earlier pipeline stage first")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{variant}/{regime}/seed {seed}: {source}")]
    Cell {
        variant: &'static str,
        regime: &'static str,
        seed: u64,
        #[source]
        source: Box<ExperimentError>,
    },
}

impl ExperimentError {
    /// True when the underlying cause is numeric divergence in training.
    pub fn is_divergence(&self) -> bool {
        match self {
            ExperimentError::Net(NetError::DivergenceDetected { .. }) => true,
            ExperimentError::Cell { source, .. } => source.is_divergence(),
            _ => false,
        }
    }

    fn in_cell(self, variant: Variant, regime: Regime, seed: u64) -> ExperimentError {
        ExperimentError::Cell {
            variant: variant.name(),
            regime: regime.name(),
            seed,
            source: Box::new(self),
        }
    }
}

/// Where the flow records come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV files; when `test` is absent the train file is split by
    /// `test_fraction`.
    Csv {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
    },
    /// Generated flows from a synthetic spec.
    Synthetic(SyntheticSpec),
}

/// Architecture knobs for one variant (dimensions and seeds are filled in
/// per run).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub dropout_rate: f64,
    pub dropout_after_output: bool,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 16,
            dropout_rate: 0.1,
            dropout_after_output: false,
        }
    }
}

impl NetSpec {
    fn to_model_config(
        &self,
        variant: Variant,
        input_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            output_dim,
            dropout_rate: self.dropout_rate,
            dropout_after_output: self.dropout_after_output,
            seed,
        }
    }
}

/// Attack hyperparameters for one method. `step_size` defaults to ε/10.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub step_size: Option<f64>,
    pub iterations: usize,
    pub random_start: bool,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            step_size: None,
            iterations: 10,
            random_start: false,
        }
    }
}

fn default_attack() -> Option<AttackSpec> {
    Some(AttackSpec::default())
}

/// Per-method attack configs; a method set to `null` is disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSet {
    pub fgsm: Option<AttackSpec>,
    pub bim: Option<AttackSpec>,
    pub pgd: Option<AttackSpec>,
}

impl Default for AttackSet {
    fn default() -> Self {
        Self {
            fgsm: default_attack(),
            bim: default_attack(),
            pgd: default_attack(),
        }
    }
}

impl AttackSet {
    fn spec_for(&self, condition: Condition) -> Option<&AttackSpec> {
        match condition {
            Condition::Clean => None,
            Condition::Fgsm => self.fgsm.as_ref(),
            Condition::Bim => self.bim.as_ref(),
            Condition::Pgd => self.pgd.as_ref(),
        }
    }
}

/// Full experiment description; the JSON config file deserializes into
/// this with every field optional and unknown keys rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Input regime of the run: min-max normalized or raw features.
    pub normalize: bool,
    /// Run both regimes and merge them into one report grid.
    pub both_regimes: bool,
    /// Drop the monotone identifier columns (Stime, Seq) before training.
    pub exclude_identifier_features: bool,
    /// Optional stratified subsample applied right after loading.
    pub subsample_fraction: Option<f64>,
    /// Held-out share when the source provides no test file.
    pub test_fraction: f64,
    /// Seed for splitting/subsampling (model seeds come from `seeds`).
    pub data_seed: u64,
    pub fnn: Option<NetSpec>,
    pub snn: Option<NetSpec>,
    pub train: TrainConfig,
    pub attacks: AttackSet,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticSpec::botiot_mini(7)),
            normalize: true,
            both_regimes: false,
            exclude_identifier_features: false,
            subsample_fraction: None,
            test_fraction: 0.2,
            data_seed: 7,
            fnn: Some(NetSpec::default()),
            snn: Some(NetSpec::default()),
            train: TrainConfig::default(),
            attacks: AttackSet::default(),
            seeds: vec![1, 2, 3],
            output_dir: None,
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.fnn.is_none() && self.snn.is_none() {
            return Err(ExperimentError::Config(
                "at least one model variant must be enabled".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("seeds must be non-empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ExperimentError::Config(
                "test_fraction must lie in (0, 1)".into(),
            ));
        }
        if let Some(f) = self.subsample_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ExperimentError::Config(
                    "subsample_fraction must lie in (0, 1]".into(),
                ));
            }
        }
        if self.threads == 0 {
            return Err(ExperimentError::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Enabled variants in fixed (FNN, SNN) order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut v = Vec::new();
        if self.fnn.is_some() {
            v.push(Variant::Fnn);
        }
        if self.snn.is_some() {
            v.push(Variant::Snn);
        }
        v
    }

    fn net_spec(&self, variant: Variant) -> &NetSpec {
        match variant {
            Variant::Fnn => self.fnn.as_ref().expect("checked by variants()"),
            Variant::Snn => self.snn.as_ref().expect("checked by variants()"),
        }
    }

    /// Regimes of the run in fixed (normalized, raw) order.
    pub fn regimes(&self) -> Vec<Regime> {
        if self.both_regimes {
            vec![Regime::Normalized, Regime::Raw]
        } else if self.normalize {
            vec![Regime::Normalized]
        } else {
            vec![Regime::Raw]
        }
    }

    /// Enabled conditions in fixed order, clean first.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = vec![Condition::Clean];
        for c in Condition::ATTACKS {
            if self.attacks.spec_for(c).is_some() {
                out.push(c);
            }
        }
        out
    }
}

/// Train/test pair prepared for one regime, with the stats that attacks
/// clip against.
pub(crate) struct RegimeData {
    pub regime: Regime,
    pub train: Dataset,
    pub test: Dataset,
    pub stats: FeatureStats,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Load the source, apply column drops and subsampling, and split.
pub(crate) fn load_splits(
    cfg: &ExperimentConfig,
) -> Result<(Dataset, Dataset, String, String), ExperimentError> {
    let (full, test, desc, hash) = match &cfg.source {
        DataSource::Synthetic(spec) => {
            let ds = spec.generate()?;
            let canonical = serde_json::to_string(spec)?;
            (ds, None, "synthetic".to_string(), sha256_hex(canonical.as_bytes()))
        }
        DataSource::Csv { train, test } => {
            let schema = crate::dataio::FeatureSchema::botiot();
            let (train_ds, train_rejected) = load_csv(train, &schema)?;
            if train_rejected > 0 {
                eprintln!("note: {train_rejected} rejected rows in {}", train.display());
            }
            let mut hasher = Sha256::new();
            hasher.update(std::fs::read(train)?);
            let test_ds = match test {
                Some(path) => {
                    let (ds, rejected) = load_csv(path, &schema)?;
                    if rejected > 0 {
                        eprintln!("note: {rejected} rejected rows in {}", path.display());
                    }
                    hasher.update(std::fs::read(path)?);
                    Some(ds)
                }
                None => None,
            };
            let desc = match test {
                Some(t) => format!("{} + {}", train.display(), t.display()),
                None => train.display().to_string(),
            };
            let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
            (train_ds, test_ds, desc, hash)
        }
    };

    let drop_ids = |ds: Dataset| -> Result<Dataset, ExperimentError> {
        if cfg.exclude_identifier_features {
            Ok(ds.drop_columns(&["Stime", "Seq"])?)
        } else {
            Ok(ds)
        }
    };
    let subsample = |ds: Dataset, tag: &str| -> Result<Dataset, ExperimentError> {
        match cfg.subsample_fraction {
            Some(f) => Ok(stratified_subsample(&ds, f, seeds::derive(cfg.data_seed, tag))?),
            None => Ok(ds),
        }
    };

    let full = subsample(drop_ids(full)?, "subsample-train")?;
    let (train_ds, test_ds) = match test {
        Some(t) => (full, subsample(drop_ids(t)?, "subsample-test")?),
        None => {
            let (train_idx, test_idx) = stratified_split(
                full.labels(),
                full.num_classes(),
                cfg.test_fraction,
                seeds::derive(cfg.data_seed, "test-split"),
            );
            (full.select(&train_idx), full.select(&test_idx))
        }
    };
    Ok((train_ds, test_ds, desc, hash))
}

/// Normalize or clamp one train/test pair for a regime. Stats always come
/// from the training rows only.
pub(crate) fn prepare_regime(
    regime: Regime,
    train_ds: &Dataset,
    test_ds: &Dataset,
) -> Result<RegimeData, ExperimentError> {
    let stats = fit_normalizer(train_ds)?;
    if !stats.constant_features().is_empty() {
        eprintln!(
            "warning: constant training features {:?} normalize to 0",
            stats.constant_features()
        );
    }
    let (train, test, stats) = match regime {
        Regime::Normalized => (
            apply_normalization(train_ds, &stats)?,
            apply_normalization(test_ds, &stats)?,
            FeatureStats {
                min: vec![0.0; stats.dim()],
                max: vec![1.0; stats.dim()],
                fitted_on: stats.fitted_on,
            },
        ),
        // Raw regime: mirror the normalized path's clamping so attack clip
        // bounds stay coherent with what the model saw in training.
        Regime::Raw => (train_ds.clone(), clamp_to_stats(test_ds, &stats)?, stats),
    };
    Ok(RegimeData {
        regime,
        train,
        test,
        stats,
    })
}

pub(crate) fn fingerprint(
    train: &Dataset,
    test: &Dataset,
    desc: String,
    hash: String,
) -> DatasetFingerprint {
    DatasetFingerprint {
        source: desc,
        source_hash: hash,
        class_names: train.schema().class_names.clone(),
        train_counts: train.class_counts().iter().map(|&c| c as u64).collect(),
        test_counts: test.class_counts().iter().map(|&c| c as u64).collect(),
        majority_share_test: test.majority_share(),
    }
}

/// Derived seed for the model init of one cell.
pub(crate) fn init_seed(exp_seed: u64, variant: Variant, regime: Regime) -> u64 {
    seeds::derive(exp_seed, &format!("init-{}-{}", variant.name(), regime.name()))
}

/// Derived seed for the training run of one cell.
pub(crate) fn train_seed(exp_seed: u64, variant: Variant, regime: Regime) -> u64 {
    seeds::derive(exp_seed, &format!("train-{}-{}", variant.name(), regime.name()))
}

/// Build the attack config for one method under a regime's stats.
pub(crate) fn build_attack_config(
    spec: &AttackSpec,
    regime: Regime,
    stats: &FeatureStats,
    exp_seed: u64,
    condition: Condition,
) -> AttackConfig {
    let mut cfg = match regime {
        Regime::Normalized => AttackConfig::unit_box(spec.epsilon, stats.dim()),
        Regime::Raw => AttackConfig::from_stats(spec.epsilon, stats),
    };
    cfg.step_size = spec.step_size.unwrap_or(spec.epsilon / 10.0);
    cfg.iterations = spec.iterations;
    cfg.random_start = spec.random_start;
    cfg.seed = seeds::derive(exp_seed, &format!("attack-{}", condition.name()));
    cfg
}

/// Outcome of one (variant, regime, seed) job.
pub(crate) struct CellResult {
    pub cells: Vec<Cell>,
    pub history: HistoryEntry,
    pub model: Model,
}

/// Train one model and evaluate it under every enabled condition.
pub(crate) fn run_cell(
    cfg: &ExperimentConfig,
    data: &RegimeData,
    variant: Variant,
    exp_seed: u64,
) -> Result<CellResult, ExperimentError> {
    let inner = || -> Result<CellResult, ExperimentError> {
        let model_cfg = cfg.net_spec(variant).to_model_config(
            variant,
            data.train.dim(),
            data.train.num_classes(),
            init_seed(exp_seed, variant, data.regime),
        );
        let tc = TrainConfig {
            seed: train_seed(exp_seed, variant, data.regime),
            ..cfg.train.clone()
        };
        let (model, history) = train(Model::init(&model_cfg)?, &data.train, &tc)?;

        let mut cells = Vec::new();
        let class_names = &data.test.schema().class_names;
        let clean_preds = model.predict_batch(data.test.features())?;
        cells.push(Cell {
            variant,
            regime: data.regime,
            condition: Condition::Clean,
            seed: exp_seed,
            report: evaluate(data.test.labels(), &clean_preds, class_names)?,
            attack_config: None,
        });

        for condition in Condition::ATTACKS {
            let Some(spec) = cfg.attacks.spec_for(condition) else {
                continue;
            };
            let attack_cfg =
                build_attack_config(spec, data.regime, &data.stats, exp_seed, condition);
            let batch = run_attack(
                condition.attack_kind().expect("attack condition"),
                &model,
                data.test.features(),
                data.test.labels(),
                &attack_cfg,
            )?;
            let preds = model.predict_batch(&batch.perturbed)?;
            cells.push(Cell {
                variant,
                regime: data.regime,
                condition,
                seed: exp_seed,
                report: evaluate(data.test.labels(), &preds, class_names)?,
                attack_config: Some(attack_cfg),
            });
        }
        Ok(CellResult {
            cells,
            history: HistoryEntry {
                variant,
                regime: data.regime,
                seed: exp_seed,
                history,
            },
            model,
        })
    };
    inner().map_err(|e| e.in_cell(variant, data.regime, exp_seed))
}

/// Run closures over the job list with at most `threads` workers,
/// returning results in job order.
pub(crate) fn run_jobs<J: Sync, T: Send>(
    jobs: &[J],
    threads: usize,
    f: impl Fn(&J) -> Result<T, ExperimentError> + Sync,
) -> Result<Vec<T>, ExperimentError> {
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, ExperimentError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let result = f(&jobs[i]);
                slots.lock().expect("worker poisoned the slots")[i] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("worker poisoned the slots");
    results
        .into_iter()
        .map(|r| r.expect("every job slot filled"))
        .collect()
}

/// Execute the full experiment described by the config. With an
/// `output_dir` set, also persists the report and per-cell checkpoints.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let (train_ds, test_ds, desc, hash) = load_splits(cfg)?;
    let fingerprint = fingerprint(&train_ds, &test_ds, desc, hash);
    let regimes: Vec<RegimeData> = cfg
        .regimes()
        .into_iter()
        .map(|r| prepare_regime(r, &train_ds, &test_ds))
        .collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for (regime_ix, _) in regimes.iter().enumerate() {
            for variant in cfg.variants() {
                jobs.push((seed, regime_ix, variant));
            }
        }
    }
    let results = run_jobs(&jobs, cfg.threads, |&(seed, regime_ix, variant)| {
        run_cell(cfg, &regimes[regime_ix], variant, seed)
    })?;

    let mut cells = Vec::new();
    let mut histories = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
    }
    for result in results {
        if let Some(dir) = &cfg.output_dir {
            let name = format!(
                "{}_{}_seed{}.json",
                result.history.variant.name(),
                result.history.regime.name(),
                result.history.seed
            );
            result.model.save(dir.join("checkpoints").join(name))?;
        }
        cells.extend(result.cells);
        histories.push(result.history);
    }

    let report = ExperimentReport {
        config: cfg.clone(),
        dataset: fingerprint,
        cells,
        histories,
    };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        report.save(dir.join("report.json"))?;
    }
    Ok(report)
}
