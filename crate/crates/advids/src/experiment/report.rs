//! Experiment output: the per-cell report grid, training histories, and
//! the FNN-vs-SNN comparison summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::metrics::ClassificationReport;
use crate::neuralnet::{TrainHistory, Variant};

use super::{ExperimentConfig, ExperimentError};

/// Input-preparation regime of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Normalized,
    Raw,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Normalized => "normalized",
            Regime::Raw => "raw",
        }
    }
}

/// Evaluation condition: the clean test split or one attack method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Fgsm,
    Bim,
    Pgd,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Clean,
        Condition::Fgsm,
        Condition::Bim,
        Condition::Pgd,
    ];

    pub const ATTACKS: [Condition; 3] = [Condition::Fgsm, Condition::Bim, Condition::Pgd];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Fgsm => "fgsm",
            Condition::Bim => "bim",
            Condition::Pgd => "pgd",
        }
    }

    pub fn attack_kind(self) -> Option<crate::attacks::AttackKind> {
        match self {
            Condition::Clean => None,
            Condition::Fgsm => Some(crate::attacks::AttackKind::Fgsm),
            Condition::Bim => Some(crate::attacks::AttackKind::Bim),
            Condition::Pgd => Some(crate::attacks::AttackKind::Pgd),
        }
    }
}

/// One grid entry: a full classification report for
/// (variant, regime, condition, seed), plus the attack config used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    pub regime: Regime,
    pub condition: Condition,
    pub seed: u64,
    pub report: ClassificationReport,
    pub attack_config: Option<AttackConfig>,
}

/// Loss curves of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub variant: Variant,
    pub regime: Regime,
    pub seed: u64,
    pub history: TrainHistory,
}

/// What was actually evaluated: class balance and a content hash of the
/// data source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub source: String,
    pub source_hash: String,
    pub class_names: Vec<String>,
    pub train_counts: Vec<u64>,
    pub test_counts: Vec<u64>,
    pub majority_share_test: f64,
}

/// Full experiment output; serializes to a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetFingerprint,
    pub cells: Vec<Cell>,
    pub histories: Vec<HistoryEntry>,
}

impl ExperimentReport {
    pub fn cell(
        &self,
        variant: Variant,
        regime: Regime,
        condition: Condition,
        seed: u64,
    ) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            c.variant == variant && c.regime == regime && c.condition == condition && c.seed == seed
        })
    }

    pub fn accuracy(
        &self,
        variant: Variant,
        regime: Regime,
        condition: Condition,
        seed: u64,
    ) -> Option<f64> {
        self.cell(variant, regime, condition, seed)
            .map(|c| c.report.accuracy)
    }

    /// Mean accuracy over every seed with this cell present.
    pub fn mean_accuracy(
        &self,
        variant: Variant,
        regime: Regime,
        condition: Condition,
    ) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.variant == variant && c.regime == regime && c.condition == condition)
            .map(|c| c.report.accuracy)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.cells.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for v in [Variant::Fnn, Variant::Snn] {
            if self.cells.iter().any(|c| c.variant == v) {
                out.push(v);
            }
        }
        out
    }

    pub fn regimes(&self) -> Vec<Regime> {
        let mut out = Vec::new();
        for r in [Regime::Normalized, Regime::Raw] {
            if self.cells.iter().any(|c| c.regime == r) {
                out.push(r);
            }
        }
        out
    }

    pub fn conditions(&self) -> Vec<Condition> {
        Condition::ALL
            .into_iter()
            .filter(|&c| self.cells.iter().any(|cell| cell.condition == c))
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// FNN − SNN accuracy gap for one (regime, condition), averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionDelta {
    pub regime: Regime,
    pub condition: Condition,
    pub fnn_mean: f64,
    pub snn_mean: f64,
    pub fnn_minus_snn: f64,
}

/// Accuracy lost to one attack, per variant and regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub variant: Variant,
    pub regime: Regime,
    pub condition: Condition,
    pub clean_mean: f64,
    pub attacked_mean: f64,
    pub drop: f64,
}

/// One expected-direction vote aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionFlag {
    pub name: String,
    pub holds: bool,
    pub votes_for: usize,
    pub votes_total: usize,
    /// "replicated" for multi-seed runs, "unreplicated" for single-seed.
    pub replication: String,
}

/// Comparison output of [`compare`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub deltas: Vec<ConditionDelta>,
    pub degradations: Vec<Degradation>,
    pub flags: Vec<DirectionFlag>,
}

impl ComparisonSummary {
    pub fn flag(&self, name: &str) -> Option<&DirectionFlag> {
        self.flags.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-condition FNN-vs-SNN deltas, per-attack degradations, and
/// majority-vote direction flags over seeds.
pub fn compare(report: &ExperimentReport) -> Result<ComparisonSummary, ExperimentError> {
    let both_variants = report.variants() == vec![Variant::Fnn, Variant::Snn];
    if !both_variants {
        return Err(ExperimentError::MissingCell(
            "comparison needs both FNN and SNN cells".into(),
        ));
    }
    let seeds = report.seeds();
    let replication = if seeds.len() > 1 {
        "replicated"
    } else {
        "unreplicated"
    };

    let mut deltas = Vec::new();
    let mut degradations = Vec::new();
    let mut flags = Vec::new();

    let mut vote = |name: String, per_seed: Vec<Option<bool>>| {
        let votes_total = per_seed.iter().filter(|v| v.is_some()).count();
        let votes_for = per_seed.iter().filter(|v| **v == Some(true)).count();
        if votes_total > 0 {
            flags.push(DirectionFlag {
                name,
                holds: votes_for * 2 > votes_total,
                votes_for,
                votes_total,
                replication: replication.to_string(),
            });
        }
    };

    for regime in report.regimes() {
        for condition in report.conditions() {
            let fnn = report.mean_accuracy(Variant::Fnn, regime, condition);
            let snn = report.mean_accuracy(Variant::Snn, regime, condition);
            if let (Some(fnn), Some(snn)) = (fnn, snn) {
                deltas.push(ConditionDelta {
                    regime,
                    condition,
                    fnn_mean: fnn,
                    snn_mean: snn,
                    fnn_minus_snn: fnn - snn,
                });
            }
            if condition != Condition::Clean {
                for variant in [Variant::Fnn, Variant::Snn] {
                    let clean = report.mean_accuracy(variant, regime, Condition::Clean);
                    let attacked = report.mean_accuracy(variant, regime, condition);
                    if let (Some(clean), Some(attacked)) = (clean, attacked) {
                        degradations.push(Degradation {
                            variant,
                            regime,
                            condition,
                            clean_mean: clean,
                            attacked_mean: attacked,
                            drop: clean - attacked,
                        });
                    }
                }
            }
        }

        let per_seed = |f: &dyn Fn(u64) -> Option<bool>| -> Vec<Option<bool>> {
            seeds.iter().map(|&s| f(s)).collect()
        };

        // Clean-performance direction: FNN at or above SNN.
        vote(
            format!("fnn_clean_ge_snn_clean_{}", regime.name()),
            per_seed(&|s| {
                let fnn = report.accuracy(Variant::Fnn, regime, Condition::Clean, s)?;
                let snn = report.accuracy(Variant::Snn, regime, Condition::Clean, s)?;
                Some(fnn >= snn)
            }),
        );

        // Resilience direction: SNN holds more accuracy under each attack.
        for condition in Condition::ATTACKS {
            if !report.conditions().contains(&condition) {
                continue;
            }
            vote(
                format!("snn_attacked_ge_fnn_{}_{}", condition.name(), regime.name()),
                per_seed(&|s| {
                    let fnn = report.accuracy(Variant::Fnn, regime, condition, s)?;
                    let snn = report.accuracy(Variant::Snn, regime, condition, s)?;
                    Some(snn >= fnn)
                }),
            );
        }

        // Iterated attack at least as strong as the single-step one.
        for variant in [Variant::Fnn, Variant::Snn] {
            if report.conditions().contains(&Condition::Bim)
                && report.conditions().contains(&Condition::Fgsm)
            {
                vote(
                    format!("bim_le_fgsm_{}_{}", variant.name(), regime.name()),
                    per_seed(&|s| {
                        let fgsm = report.accuracy(variant, regime, Condition::Fgsm, s)?;
                        let bim = report.accuracy(variant, regime, Condition::Bim, s)?;
                        Some(bim <= fgsm)
                    }),
                );
            }
        }
    }

    // Normalization-effect directions need both regimes.
    if report.regimes() == vec![Regime::Normalized, Regime::Raw] {
        for variant in [Variant::Fnn, Variant::Snn] {
            vote(
                format!("raw_clean_below_normalized_clean_{}", variant.name()),
                seeds
                    .iter()
                    .map(|&s| {
                        let norm =
                            report.accuracy(variant, Regime::Normalized, Condition::Clean, s)?;
                        let raw = report.accuracy(variant, Regime::Raw, Condition::Clean, s)?;
                        Some(raw < norm)
                    })
                    .collect(),
            );
            for condition in Condition::ATTACKS {
                if !report.conditions().contains(&condition) {
                    continue;
                }
                vote(
                    format!("raw_{}_within_5_points_of_raw_clean_{}", condition.name(), variant.name()),
                    seeds
                        .iter()
                        .map(|&s| {
                            let clean = report.accuracy(variant, Regime::Raw, Condition::Clean, s)?;
                            let attacked = report.accuracy(variant, Regime::Raw, condition, s)?;
                            Some(attacked > clean - 0.05)
                        })
                        .collect(),
                );
            }
        }
    }

    Ok(ComparisonSummary {
        deltas,
        degradations,
        flags,
    })
}
