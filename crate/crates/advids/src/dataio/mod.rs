//! Flow-record ingestion and preparation: CSV loading, label encoding,
//! min-max normalization fitted on training data, stratified
//! splitting/subsampling, and synthetic dataset generation.
//!
//! CSV dialect: comma-separated, UTF-8, header row required, `.` decimal
//! separator. The label column holds class-name strings.

mod synth;

pub use synth::{ClassSpec, FeatureDist, SyntheticSpec};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::seeds;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column {0:?} missing from header")]
    MissingColumn(String),
    #[error("no usable rows in input")]
    EmptyDataset,
    #[error("label {value:?} at row {row} is not in the class vocabulary")]
    LabelOutOfVocabulary { value: String, row: usize },
    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Column layout and label vocabulary of a flow-feature table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub label_column: String,
    pub class_names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(
        names: Vec<String>,
        label_column: impl Into<String>,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let schema = Self {
            names,
            label_column: label_column.into(),
            class_names,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The 10 BoT-IoT model inputs (row identifier dropped) and the five
    /// traffic classes.
    pub fn botiot() -> Self {
        Self {
            names: [
                "Stime",
                "Seq",
                "Mean",
                "Stddev",
                "Min",
                "Max",
                "Srate",
                "Drate",
                "N_IN_Conn_P_SrcIP",
                "N_IN_Conn_P_DstIP",
            ]
            .iter()
            .map(ToString::to_string)
            .collect(),
            label_column: "category".to_string(),
            class_names: ["DDoS", "DoS", "Reconnaissance", "Normal", "Theft"]
                .iter()
                .map(ToString::to_string)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    fn validate(&self) -> Result<(), DataError> {
        for (i, name) in self.names.iter().enumerate() {
            if name.is_empty() {
                return Err(DataError::InvalidSpec(format!("feature {i} has empty name")));
            }
            if self.names[..i].contains(name) {
                return Err(DataError::InvalidSpec(format!("duplicate feature {name:?}")));
            }
        }
        if self.num_classes() < 2 {
            return Err(DataError::InvalidSpec("need at least 2 classes".into()));
        }
        for (i, name) in self.class_names.iter().enumerate() {
            if self.class_names[..i].contains(name) {
                return Err(DataError::InvalidSpec(format!("duplicate class {name:?}")));
            }
        }
        Ok(())
    }
}

/// Immutable feature matrix with encoded labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    schema: FeatureSchema,
    normalized: bool,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        schema: FeatureSchema,
        normalized: bool,
    ) -> Result<Self, DataError> {
        schema.validate()?;
        if features.cols() != schema.dim() {
            return Err(DataError::DimensionMismatch {
                expected: schema.dim(),
                actual: features.cols(),
            });
        }
        if features.rows() != labels.len() {
            return Err(DataError::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        for (row, slice) in features.iter_rows().enumerate() {
            if let Some(col) = slice.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row, col });
            }
        }
        let k = schema.num_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(DataError::LabelOutOfRange {
                label: bad,
                classes: k,
            });
        }
        Ok(Self {
            features,
            labels,
            schema,
            normalized,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.schema.num_classes()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Per-class row counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Share of the most frequent class; the floor a constant predictor hits.
    pub fn majority_share(&self) -> f64 {
        let counts = self.class_counts();
        let max = counts.iter().copied().max().unwrap_or(0);
        if self.n() == 0 {
            0.0
        } else {
            max as f64 / self.n() as f64
        }
    }

    /// New dataset keeping only the rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
            normalized: self.normalized,
        }
    }

    /// Drop the named feature columns (identifier-leak control).
    pub fn drop_columns(&self, names: &[&str]) -> Result<Dataset, DataError> {
        let keep: Vec<usize> = (0..self.dim())
            .filter(|&j| !names.contains(&self.schema.names[j].as_str()))
            .collect();
        for name in names {
            if !self.schema.names.iter().any(|n| n == name) {
                return Err(DataError::MissingColumn((*name).to_string()));
            }
        }
        let mut data = Vec::with_capacity(self.n() * keep.len());
        for row in self.features.iter_rows() {
            data.extend(keep.iter().map(|&j| row[j]));
        }
        let schema = FeatureSchema {
            names: keep.iter().map(|&j| self.schema.names[j].clone()).collect(),
            label_column: self.schema.label_column.clone(),
            class_names: self.schema.class_names.clone(),
        };
        Dataset::new(
            Matrix::from_vec(self.n(), keep.len(), data),
            self.labels.clone(),
            schema,
            self.normalized,
        )
    }
}

/// Load a CSV against a schema. Column order follows `schema.names`
/// regardless of file order; rows with unparseable numbers or labels
/// outside the vocabulary are skipped. Returns the dataset plus the
/// rejected-row count.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<(Dataset, usize), DataError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let feature_cols: Vec<usize> = schema
        .names
        .iter()
        .map(|n| find(n))
        .collect::<Result<_, _>>()?;
    let label_col = find(&schema.label_column)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rejected = 0usize;
    'rows: for record in reader.records() {
        let record = record?;
        let label = match record.get(label_col).and_then(|v| schema.class_index(v)) {
            Some(ix) => ix,
            None => {
                rejected += 1;
                continue;
            }
        };
        let mut row = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            match record.get(col).and_then(|v| v.trim().parse::<f64>().ok()) {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    rejected += 1;
                    continue 'rows;
                }
            }
        }
        data.extend(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let features = Matrix::from_vec(labels.len(), schema.dim(), data);
    Ok((Dataset::new(features, labels, schema.clone(), false)?, rejected))
}

/// Write a dataset in the same dialect `load_csv` reads. Features use the
/// shortest decimal form that parses back to the identical `f64`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut out = std::io::BufWriter::new(file);
    let schema = ds.schema();
    writeln!(out, "{},{}", schema.names.join(","), schema.label_column)?;
    for (row, &label) in ds.features().iter_rows().zip(ds.labels()) {
        for v in row {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", schema.class_names[label])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-feature extrema fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(rename = "n")]
    pub fitted_on: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Indices of features with `min == max`; these normalize to 0.
    pub fn constant_features(&self) -> Vec<usize> {
        self.min
            .iter()
            .zip(&self.max)
            .enumerate()
            .filter(|(_, (lo, hi))| lo == hi)
            .map(|(j, _)| j)
            .collect()
    }

    /// Per-feature span `max - min` (0 for constant features).
    pub fn ranges(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fit per-feature min/max on the training rows.
pub fn fit_normalizer(train: &Dataset) -> Result<FeatureStats, DataError> {
    if train.n() < 2 {
        return Err(DataError::TooFewRows {
            needed: 2,
            got: train.n(),
        });
    }
    let d = train.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train.features().iter_rows() {
        for j in 0..d {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    Ok(FeatureStats {
        min,
        max,
        fitted_on: train.n(),
    })
}

/// Min-max rescale to [0, 1] with clamping; constant features map to 0.
pub fn apply_normalization(ds: &Dataset, stats: &FeatureStats) -> Result<Dataset, DataError> {
    if ds.dim() != stats.dim() {
        return Err(DataError::DimensionMismatch {
            expected: stats.dim(),
            actual: ds.dim(),
        });
    }
    let d = ds.dim();
    let mut data = Vec::with_capacity(ds.n() * d);
    for row in ds.features().iter_rows() {
        for j in 0..d {
            let span = stats.max[j] - stats.min[j];
            let v = if span == 0.0 {
                0.0
            } else {
                ((row[j] - stats.min[j]) / span).clamp(0.0, 1.0)
            };
            data.push(v);
        }
    }
    Dataset::new(
        Matrix::from_vec(ds.n(), d, data),
        ds.labels().to_vec(),
        ds.schema().clone(),
        true,
    )
}

/// Clamp every feature into the stats range without rescaling — the
/// raw-regime counterpart of normalized clamping, keeping test rows
/// inside the attack clip bounds.
pub fn clamp_to_stats(ds: &Dataset, stats: &FeatureStats) -> Result<Dataset, DataError> {
    if ds.dim() != stats.dim() {
        return Err(DataError::DimensionMismatch {
            expected: stats.dim(),
            actual: ds.dim(),
        });
    }
    let d = ds.dim();
    let mut data = Vec::with_capacity(ds.n() * d);
    for row in ds.features().iter_rows() {
        for j in 0..d {
            data.push(row[j].clamp(stats.min[j], stats.max[j]));
        }
    }
    Dataset::new(
        Matrix::from_vec(ds.n(), d, data),
        ds.labels().to_vec(),
        ds.schema().clone(),
        ds.is_normalized(),
    )
}

/// One-hot encode labels into an [N×K] matrix.
pub fn encode_one_hot(labels: &[usize], k: usize) -> Result<Matrix, DataError> {
    let mut m = Matrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(DataError::LabelOutOfRange { label: l, classes: k });
        }
        m.set(i, l, 1.0);
    }
    Ok(m)
}

/// Split row indices per class: the held-out side receives
/// `ceil(fraction * class_count)` rows, capped so each class with at least
/// two rows keeps one in the kept side. Both sides preserve input order.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "stratified-split"));
    let mut held = Vec::new();
    let mut kept = Vec::new();
    for class in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        let take = ((fraction * idx.len() as f64).ceil() as usize).min(idx.len().saturating_sub(1));
        idx.shuffle(&mut rng);
        held.extend(idx.iter().take(take));
        kept.extend(idx.iter().skip(take));
    }
    held.sort_unstable();
    kept.sort_unstable();
    (kept, held)
}

/// Keep `ceil(fraction * count)` rows of every class, deterministically
/// under the seed. Output preserves input row order.
pub fn stratified_subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::FractionOutOfRange(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "stratified-subsample"));
    let mut selected = Vec::new();
    for class in 0..ds.num_classes() {
        let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.labels()[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        let take = (fraction * idx.len() as f64).ceil() as usize;
        idx.shuffle(&mut rng);
        selected.extend(idx.into_iter().take(take));
    }
    selected.sort_unstable();
    Ok(ds.select(&selected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_schema() -> FeatureSchema {
        FeatureSchema::new(
            vec!["a".into(), "b".into()],
            "label",
            vec!["x".into(), "y".into()],
        )
        .unwrap()
    }

    fn tiny_dataset() -> Dataset {
        Dataset::new(
            Matrix::from_rows(&[vec![0.0, 10.0], vec![1.0, 20.0], vec![0.5, 15.0]]),
            vec![0, 1, 0],
            tiny_schema(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn schema_rejects_duplicates() {
        assert!(FeatureSchema::new(
            vec!["a".into(), "a".into()],
            "label",
            vec!["x".into(), "y".into()]
        )
        .is_err());
        assert!(FeatureSchema::new(
            vec!["a".into()],
            "label",
            vec!["x".into(), "x".into()]
        )
        .is_err());
        assert!(FeatureSchema::new(vec!["a".into()], "label", vec!["x".into()]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels_and_nonfinite() {
        let err = Dataset::new(
            Matrix::from_rows(&[vec![0.0, 1.0]]),
            vec![2],
            tiny_schema(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { label: 2, .. }));
        let err = Dataset::new(
            Matrix::from_rows(&[vec![f64::NAN, 1.0]]),
            vec![0],
            tiny_schema(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NonFinite { row: 0, col: 0 }));
    }

    #[test]
    fn load_csv_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        let schema = FeatureSchema::botiot();
        let header = format!("{},{}", schema.names.join(","), schema.label_column);
        let mut body = String::new();
        for (i, label) in ["DDoS", "Normal", "DDoS", "Normal"].iter().enumerate() {
            let vals: Vec<String> = (0..10).map(|j| format!("{}.5", i * 10 + j)).collect();
            body.push_str(&format!("{},{}\n", vals.join(","), label));
        }
        std::fs::write(&path, format!("{header}\n{body}")).unwrap();
        let (ds, rejected) = load_csv(&path, &schema).unwrap();
        assert_eq!((ds.n(), ds.dim(), rejected), (4, 10, 0));
        assert!(!ds.is_normalized());
        assert_eq!(ds.labels(), &[0, 3, 0, 3]);
    }

    #[test]
    fn load_csv_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        let schema = FeatureSchema::botiot();
        // Drop Srate from the header.
        let names: Vec<&str> = schema.names.iter().map(String::as_str).filter(|n| *n != "Srate").collect();
        std::fs::write(&path, format!("{},category\n", names.join(","))).unwrap();
        match load_csv(&path, &schema) {
            Err(DataError::MissingColumn(name)) => assert_eq!(name, "Srate"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_bad_rows_with_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        std::fs::write(
            &path,
            "a,b,label\n1,2,x\nnot_a_number,2,x\n3,4,unknown_class\n5,6,y\n",
        )
        .unwrap();
        let (ds, rejected) = load_csv(&path, &tiny_schema()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(rejected, 2);
    }

    #[test]
    fn load_csv_reorders_columns_to_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        std::fs::write(&path, "b,label,a\n10,x,1\n20,y,2\n").unwrap();
        let (ds, _) = load_csv(&path, &tiny_schema()).unwrap();
        assert_eq!(ds.features().row(0), &[1.0, 10.0]);
        assert_eq!(ds.features().row(1), &[2.0, 20.0]);
    }

    #[test]
    fn empty_file_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        std::fs::write(&path, "a,b,label\n").unwrap();
        assert!(matches!(
            load_csv(&path, &tiny_schema()),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.csv");
        let ds = SyntheticSpec::botiot_mini(3)
            .with_counts(&[20, 15, 8, 4, 2])
            .generate()
            .unwrap();
        write_csv(&ds, &path).unwrap();
        let (back, rejected) = load_csv(&path, ds.schema()).unwrap();
        assert_eq!(rejected, 0);
        assert_eq!(back, ds);
    }

    #[test]
    fn normalizer_min_max() {
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![2.0, 0.0], vec![4.0, 10.0], vec![6.0, 20.0]]),
            vec![0, 1, 0],
            tiny_schema(),
            false,
        )
        .unwrap();
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.min, vec![2.0, 0.0]);
        assert_eq!(stats.max, vec![6.0, 20.0]);
        assert_eq!(stats.fitted_on, 3);
        let norm = apply_normalization(&ds, &stats).unwrap();
        assert!(norm.is_normalized());
        let col0: Vec<f64> = norm.features().iter_rows().map(|r| r[0]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalizer_two_feature_example() {
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![0.0, 10.0], vec![1.0, 20.0]]),
            vec![0, 1],
            tiny_schema(),
            false,
        )
        .unwrap();
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.min, vec![0.0, 10.0]);
        assert_eq!(stats.max, vec![1.0, 20.0]);
    }

    #[test]
    fn constant_feature_flagged_and_maps_to_zero() {
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]]),
            vec![0, 1, 0],
            tiny_schema(),
            false,
        )
        .unwrap();
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.constant_features(), vec![0]);
        let norm = apply_normalization(&ds, &stats).unwrap();
        assert!(norm.features().iter_rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn out_of_range_values_clamp() {
        let train = tiny_dataset();
        let stats = fit_normalizer(&train).unwrap();
        let test = Dataset::new(
            Matrix::from_rows(&[vec![8.0, -5.0]]),
            vec![0],
            tiny_schema(),
            false,
        )
        .unwrap();
        let norm = apply_normalization(&test, &stats).unwrap();
        assert_eq!(norm.features().row(0), &[1.0, 0.0]);
    }

    #[test]
    fn normalization_dimension_mismatch() {
        let stats = FeatureStats {
            min: vec![0.0; 3],
            max: vec![1.0; 3],
            fitted_on: 2,
        };
        assert!(matches!(
            apply_normalization(&tiny_dataset(), &stats),
            Err(DataError::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn stats_json_shape() {
        let stats = FeatureStats {
            min: vec![0.0, 1.0],
            max: vec![2.0, 3.0],
            fitted_on: 9,
        };
        let json = serde_json::to_value(&stats).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"min": [0.0, 1.0], "max": [2.0, 3.0], "n": 9})
        );
    }

    #[test]
    fn one_hot_examples() {
        let m = encode_one_hot(&[0, 2], 3).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 0.0, 1.0]);
        let m = encode_one_hot(&[4], 5).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            encode_one_hot(&[5], 5),
            Err(DataError::LabelOutOfRange { label: 5, classes: 5 })
        ));
    }

    #[test]
    fn subsample_ceiling_counts() {
        let spec = SyntheticSpec::blobs(2, &[100, 10], 3, 4.0, 5);
        let ds = spec.generate().unwrap();
        let sub = stratified_subsample(&ds, 0.1, 1).unwrap();
        assert_eq!(sub.class_counts(), vec![10, 1]);
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let ds = SyntheticSpec::blobs(2, &[20, 10], 3, 4.0, 5).generate().unwrap();
        let full = stratified_subsample(&ds, 1.0, 9).unwrap();
        assert_eq!(full, ds);
        let a = stratified_subsample(&ds, 0.4, 9).unwrap();
        let b = stratified_subsample(&ds, 0.4, 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            stratified_subsample(&ds, 0.0, 9),
            Err(DataError::FractionOutOfRange(_))
        ));
    }

    #[test]
    fn split_keeps_small_classes_trainable() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 2];
        let (kept, held) = stratified_split(&labels, 3, 0.2, 7);
        assert_eq!(kept.len() + held.len(), labels.len());
        // Class 2 has a single row; it must stay on the kept side.
        assert!(kept.contains(&7));
        // Every class with >= 2 rows appears on both sides.
        assert!(held.iter().any(|&i| labels[i] == 0));
        assert!(held.iter().any(|&i| labels[i] == 1));
        assert!(kept.iter().any(|&i| labels[i] == 1));
    }

    #[test]
    fn drop_columns_removes_identifiers() {
        let ds = SyntheticSpec::botiot_mini(3)
            .with_counts(&[5, 5, 3, 2, 2])
            .generate()
            .unwrap();
        let slim = ds.drop_columns(&["Stime", "Seq"]).unwrap();
        assert_eq!(slim.dim(), 8);
        assert!(!slim.schema().names.contains(&"Stime".to_string()));
        assert!(ds.drop_columns(&["NoSuchColumn"]).is_err());
    }

    proptest! {
        // Applying normalization twice, with stats refit on the normalized
        // data, reproduces the same matrix.
        #[test]
        fn normalization_idempotent(seed in 0u64..1000) {
            let ds = SyntheticSpec::blobs(2, &[12, 8], 4, 3.0, seed).generate().unwrap();
            let stats = fit_normalizer(&ds).unwrap();
            let once = apply_normalization(&ds, &stats).unwrap();
            let restats = fit_normalizer(&once).unwrap();
            let twice = apply_normalization(&once, &restats).unwrap();
            for (a, b) in once.features().data().iter().zip(twice.features().data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for v in once.features().data() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        // Every class populous enough for the fraction survives subsampling.
        #[test]
        fn subsample_preserves_class_presence(
            seed in 0u64..500,
            fraction in 0.05f64..1.0
        ) {
            let ds = SyntheticSpec::blobs(3, &[30, 12, 4], 2, 3.0, seed).generate().unwrap();
            let sub = stratified_subsample(&ds, fraction, seed).unwrap();
            let counts = sub.class_counts();
            for (class, &n) in ds.class_counts().iter().enumerate() {
                if n >= 1 {
                    prop_assert!(counts[class] >= 1);
                }
            }
        }
    }
}
