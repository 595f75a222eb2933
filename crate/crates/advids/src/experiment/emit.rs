//! Report serialization: full JSON, a flat CSV grid, and per-figure plot
//! tables (seed-averaged, percent scale). Output bytes are a pure
//! function of the report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::metrics::ClassificationReport;
use crate::neuralnet::Variant;

use super::{Condition, ExperimentError, ExperimentReport, Regime};

/// Output format of [`emit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitFormat {
    Json,
    CsvGrid,
    PlotData,
}

impl FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(EmitFormat::Json),
            "csv-grid" => Ok(EmitFormat::CsvGrid),
            "plot-data" => Ok(EmitFormat::PlotData),
            other => Err(format!(
                "unknown format {other:?}; expected json, csv-grid, or plot-data"
            )),
        }
    }
}

const CONDITION_LABELS: [(Condition, &str); 4] = [
    (Condition::Clean, "Adversarial-free"),
    (Condition::Fgsm, "FGSM Attack"),
    (Condition::Bim, "BIM Attack"),
    (Condition::Pgd, "PGD Attack"),
];

/// The six per-model metrics plotted by the comparison figures; averages
/// are support-weighted (the unweighted macro versions live in the JSON
/// report).
const METRIC_LABELS: [&str; 6] = [
    "Prediction Accuracy",
    "Average Precision",
    "Average Recall",
    "Average F1-Score",
    "Cohen Kappa Score",
    "MC Coefficient",
];

fn metric_value(report: &ClassificationReport, metric: usize) -> f64 {
    match metric {
        0 => report.accuracy,
        1 => report.weighted_avg.precision,
        2 => report.weighted_avg.recall,
        3 => report.weighted_avg.f1,
        4 => report.cohen_kappa,
        5 => report.mcc,
        _ => unreachable!("six metrics"),
    }
}

fn mean_metric(
    report: &ExperimentReport,
    variant: Variant,
    regime: Regime,
    condition: Condition,
    metric: usize,
) -> Option<f64> {
    let values: Vec<f64> = report
        .cells
        .iter()
        .filter(|c| c.variant == variant && c.regime == regime && c.condition == condition)
        .map(|c| metric_value(&c.report, metric))
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn pct(v: f64) -> String {
    format!("{:.6}", v * 100.0)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, ExperimentError> {
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

/// Accuracy of the FNN across conditions in one regime (bar chart data).
fn fig4(report: &ExperimentReport) -> Option<String> {
    let mut out = String::from("dataset,accuracy_pct\n");
    let mut rows = 0;
    for (condition, label) in CONDITION_LABELS {
        // The clean bar carries the attack-free label in this table.
        let label = if condition == Condition::Clean {
            "Adversarial-Free"
        } else {
            match condition {
                Condition::Fgsm => "FGSM",
                Condition::Bim => "BIM",
                Condition::Pgd => "PGD",
                Condition::Clean => unreachable!(),
            }
        };
        if let Some(acc) = mean_metric(report, Variant::Fnn, Regime::Normalized, condition, 0) {
            let _ = writeln!(out, "{label},{}", pct(acc));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

/// Six metrics × both models on the clean normalized split.
fn fig5(report: &ExperimentReport) -> Option<String> {
    let mut out = String::from("metric,FNN,SNN\n");
    let mut rows = 0;
    for (metric, label) in METRIC_LABELS.iter().enumerate() {
        let fnn = mean_metric(report, Variant::Fnn, Regime::Normalized, Condition::Clean, metric);
        let snn = mean_metric(report, Variant::Snn, Regime::Normalized, Condition::Clean, metric);
        if let (Some(fnn), Some(snn)) = (fnn, snn) {
            let _ = writeln!(out, "{label},{},{}", pct(fnn), pct(snn));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

/// FNN vs SNN accuracy per condition (adversarial resilience).
fn fig6(report: &ExperimentReport) -> Option<String> {
    let mut out = String::from("condition,FNN,SNN\n");
    let mut rows = 0;
    for (condition, label) in CONDITION_LABELS {
        let fnn = mean_metric(report, Variant::Fnn, Regime::Normalized, condition, 0);
        let snn = mean_metric(report, Variant::Snn, Regime::Normalized, condition, 0);
        if let (Some(fnn), Some(snn)) = (fnn, snn) {
            let _ = writeln!(out, "{label},{},{}", pct(fnn), pct(snn));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

/// Normalized vs raw accuracy per condition for one variant.
fn fig_norm_vs_raw(report: &ExperimentReport, variant: Variant) -> Option<String> {
    let mut out = String::from("dataset,Normalized,Raw Input\n");
    let mut rows = 0;
    for (condition, label) in CONDITION_LABELS {
        let norm = mean_metric(report, variant, Regime::Normalized, condition, 0);
        let raw = mean_metric(report, variant, Regime::Raw, condition, 0);
        if let (Some(norm), Some(raw)) = (norm, raw) {
            let _ = writeln!(out, "{label},{},{}", pct(norm), pct(raw));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

/// Per-metric normalization effect for both models on the clean split.
fn fig9(report: &ExperimentReport) -> Option<String> {
    let mut out = String::from("metric,FNN Normalized,FNN Raw Input,SNN Normalized,SNN Raw Input\n");
    let mut rows = 0;
    for (metric, label) in METRIC_LABELS.iter().enumerate() {
        let cells = [
            mean_metric(report, Variant::Fnn, Regime::Normalized, Condition::Clean, metric),
            mean_metric(report, Variant::Fnn, Regime::Raw, Condition::Clean, metric),
            mean_metric(report, Variant::Snn, Regime::Normalized, Condition::Clean, metric),
            mean_metric(report, Variant::Snn, Regime::Raw, Condition::Clean, metric),
        ];
        if let [Some(a), Some(b), Some(c), Some(d)] = cells {
            let _ = writeln!(out, "{label},{},{},{},{}", pct(a), pct(b), pct(c), pct(d));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

fn csv_grid(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "variant,regime,condition,seed,accuracy,\
         macro_precision,macro_recall,macro_f1,\
         weighted_precision,weighted_recall,weighted_f1,\
         cohen_kappa,mcc\n",
    );
    for cell in &report.cells {
        let r = &cell.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            cell.variant.name(),
            cell.regime.name(),
            cell.condition.name(),
            cell.seed,
            r.accuracy,
            r.macro_avg.precision,
            r.macro_avg.recall,
            r.macro_avg.f1,
            r.weighted_avg.precision,
            r.weighted_avg.recall,
            r.weighted_avg.f1,
            r.cohen_kappa,
            r.mcc,
        );
    }
    out
}

/// Write the report in the chosen format; returns the files created.
/// Figure tables whose cells are absent from the grid are skipped.
pub fn emit(
    report: &ExperimentReport,
    format: EmitFormat,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        EmitFormat::Json => {
            written.push(write_file(dir, "report.json", &report.to_json()?)?);
        }
        EmitFormat::CsvGrid => {
            written.push(write_file(dir, "grid.csv", &csv_grid(report))?);
        }
        EmitFormat::PlotData => {
            let tables: [(&str, Option<String>); 6] = [
                ("fig4.csv", fig4(report)),
                ("fig5.csv", fig5(report)),
                ("fig6.csv", fig6(report)),
                ("fig7.csv", fig_norm_vs_raw(report, Variant::Fnn)),
                ("fig8.csv", fig_norm_vs_raw(report, Variant::Snn)),
                ("fig9.csv", fig9(report)),
            ];
            for (name, table) in tables {
                if let Some(content) = table {
                    written.push(write_file(dir, name, &content)?);
                }
            }
        }
    }
    Ok(written)
}
