//! Multiclass evaluation: confusion matrix, accuracy, precision/recall/F1
//! (per-class, macro, weighted), Cohen's kappa, and the multiclass Matthews
//! correlation coefficient.
//!
//! Zero-denominator conventions: precision/recall for a class with an empty
//! column/row are 0; MCC with a zero denominator is 0; kappa with expected
//! agreement 1 is 1 when observed agreement is also 1, otherwise 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("label vectors have different lengths ({truth} vs {pred})")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {label} at position {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        label: usize,
        index: usize,
        classes: usize,
    },
    #[error("confusion matrix has no observations")]
    EmptyMatrix,
}

/// Counts of (true class, predicted class) pairs; rows are truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    /// Tally `counts[i][j] = |{n : y_true[n]=i and y_pred[n]=j}|`.
    pub fn from_labels(
        y_true: &[usize],
        y_pred: &[usize],
        class_names: &[String],
    ) -> Result<Self, MetricsError> {
        if y_true.len() != y_pred.len() {
            return Err(MetricsError::LengthMismatch {
                truth: y_true.len(),
                pred: y_pred.len(),
            });
        }
        let k = class_names.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
            for &label in [t, p].iter() {
                if label >= k {
                    return Err(MetricsError::LabelOutOfRange {
                        label,
                        index: i,
                        classes: k,
                    });
                }
            }
            counts[t][p] += 1;
        }
        Ok(Self {
            counts,
            class_names: class_names.to_vec(),
        })
    }

    /// Build directly from counts (rows = true class).
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Self {
        assert_eq!(counts.len(), class_names.len());
        for row in &counts {
            assert_eq!(row.len(), class_names.len());
        }
        Self {
            counts,
            class_names,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let k = self.num_classes();
        (0..k).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

/// Per-class precision/recall/F1 with the class support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Unweighted or support-weighted average of the per-class scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full multiclass evaluation derived from one confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub n: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub macro_avg: AverageScores,
    pub weighted_avg: AverageScores,
    pub cohen_kappa: f64,
    pub mcc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Derive the full report from a confusion matrix.
pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = cm.num_classes();
    let trace = cm.trace();
    let rows = cm.row_sums();
    let cols = cm.col_sums();

    let accuracy = trace as f64 / n as f64;

    let mut per_class = Vec::with_capacity(k);
    for i in 0..k {
        let precision = ratio(cm.counts[i][i], cols[i]);
        let recall = ratio(cm.counts[i][i], rows[i]);
        per_class.push(ClassScores {
            class: cm.class_names[i].clone(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: rows[i],
        });
    }

    let kf = k as f64;
    let macro_avg = AverageScores {
        precision: per_class.iter().map(|c| c.precision).sum::<f64>() / kf,
        recall: per_class.iter().map(|c| c.recall).sum::<f64>() / kf,
        f1: per_class.iter().map(|c| c.f1).sum::<f64>() / kf,
    };
    let weighted_avg = AverageScores {
        precision: per_class
            .iter()
            .map(|c| c.precision * c.support as f64)
            .sum::<f64>()
            / n as f64,
        recall: per_class
            .iter()
            .map(|c| c.recall * c.support as f64)
            .sum::<f64>()
            / n as f64,
        f1: per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / n as f64,
    };

    // Integer cross-products keep the degenerate-case checks exact.
    let n2 = u128::from(n) * u128::from(n);
    let sum_rc: u128 = rows
        .iter()
        .zip(&cols)
        .map(|(&r, &c)| u128::from(r) * u128::from(c))
        .sum();
    let sum_rr: u128 = rows.iter().map(|&r| u128::from(r) * u128::from(r)).sum();
    let sum_cc: u128 = cols.iter().map(|&c| u128::from(c) * u128::from(c)).sum();

    let cohen_kappa = if sum_rc == n2 {
        // Expected agreement 1: both sides concentrate on a single class.
        if trace == n {
            1.0
        } else {
            0.0
        }
    } else {
        let p_o = accuracy;
        let p_e = sum_rc as f64 / n2 as f64;
        (p_o - p_e) / (1.0 - p_e)
    };

    let mcc = if sum_rr == n2 || sum_cc == n2 {
        0.0
    } else {
        let num = u128::from(n) * u128::from(trace);
        let numerator = num as f64 - sum_rc as f64;
        let denominator = ((n2 - sum_cc) as f64 * (n2 - sum_rr) as f64).sqrt();
        numerator / denominator
    };

    Ok(ClassificationReport {
        confusion: cm.clone(),
        n,
        accuracy,
        per_class,
        macro_avg,
        weighted_avg,
        cohen_kappa,
        mcc,
    })
}

/// Convenience: confusion matrix plus report in one call.
pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[String],
) -> Result<ClassificationReport, MetricsError> {
    report(&ConfusionMatrix::from_labels(y_true, y_pred, class_names)?)
}
