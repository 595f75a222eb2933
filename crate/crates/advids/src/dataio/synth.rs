//! Synthetic flow-feature generation for desk-scale runs and CI.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureSchema};
use crate::matrix::Matrix;

/// Location/scale of one feature within one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDist {
    pub loc: f64,
    pub scale: f64,
}

/// Sample count and per-feature distributions for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub count: usize,
    pub features: Vec<FeatureDist>,
}

/// Recipe for a synthetic dataset: Gaussian per-class feature clouds with
/// exact per-class counts, reproducible under the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub feature_names: Vec<String>,
    pub label_column: String,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// BoT-IoT-shaped preset: the 10 model-input features with class
    /// proportions mirroring the scaled dataset (DDoS-dominant, Theft
    /// rarest) at N = 20,000. Identifier-like columns (Stime, Seq) carry
    /// no class signal; traffic-statistics columns separate the classes.
    /// Raw feature scales are deliberately wild (epoch seconds vs. packet
    /// rates) so the unnormalized regime behaves like real flow captures.
    pub fn botiot_mini(seed: u64) -> Self {
        let schema = FeatureSchema::botiot();
        // Rows: per-class [loc, scale] for each of the 10 features, in
        // schema order. Classes: DDoS, DoS, Reconnaissance, Normal, Theft.
        let table: [[[f64; 2]; 10]; 5] = [
            [
                [1.526e9, 3.0e5],
                [6.0e4, 3.0e4],
                [0.8, 0.35],
                [0.25, 0.12],
                [0.4, 0.20],
                [1.4, 0.40],
                [9000.0, 1100.0],
                [25.0, 8.0],
                [95.0, 10.0],
                [88.0, 10.0],
            ],
            [
                [1.526e9, 3.0e5],
                [6.0e4, 3.0e4],
                [1.6, 0.35],
                [0.6, 0.18],
                [0.9, 0.25],
                [2.6, 0.45],
                [5200.0, 700.0],
                [45.0, 12.0],
                [70.0, 9.0],
                [60.0, 9.0],
            ],
            [
                [1.526e9, 3.0e5],
                [6.0e4, 3.0e4],
                [3.2, 0.40],
                [1.2, 0.25],
                [2.0, 0.30],
                [4.6, 0.50],
                [700.0, 120.0],
                [140.0, 30.0],
                [28.0, 5.0],
                [20.0, 4.0],
            ],
            [
                [1.526e9, 3.0e5],
                [6.0e4, 3.0e4],
                [2.4, 0.40],
                [0.9, 0.22],
                [1.5, 0.30],
                [3.6, 0.50],
                [60.0, 18.0],
                [320.0, 60.0],
                [8.0, 2.5],
                [6.0, 2.0],
            ],
            [
                [1.526e9, 3.0e5],
                [6.0e4, 3.0e4],
                [4.5, 0.50],
                [1.6, 0.30],
                [3.0, 0.40],
                [6.0, 0.60],
                [15.0, 6.0],
                [75.0, 20.0],
                [4.0, 1.5],
                [3.0, 1.2],
            ],
        ];
        let counts = [10_500usize, 8_995, 495, 7, 3];
        let classes = schema
            .class_names
            .iter()
            .zip(table.iter().zip(counts))
            .map(|(name, (dists, count))| ClassSpec {
                name: name.clone(),
                count,
                features: dists
                    .iter()
                    .map(|ls| FeatureDist {
                        loc: ls[0],
                        scale: ls[1],
                    })
                    .collect(),
            })
            .collect();
        Self {
            feature_names: schema.names,
            label_column: schema.label_column,
            classes,
            seed,
        }
    }

    /// Plain Gaussian blob classes spaced `separation` apart along every
    /// axis; handy for quick separable fixtures.
    pub fn blobs(classes: usize, per_class: &[usize], dim: usize, separation: f64, seed: u64) -> Self {
        assert_eq!(classes, per_class.len());
        Self {
            feature_names: (0..dim).map(|j| format!("f{j}")).collect(),
            label_column: "label".to_string(),
            classes: (0..classes)
                .map(|c| ClassSpec {
                    name: format!("class{c}"),
                    count: per_class[c],
                    features: (0..dim)
                        .map(|_| FeatureDist {
                            loc: c as f64 * separation,
                            scale: 1.0,
                        })
                        .collect(),
                })
                .collect(),
            seed,
        }
    }

    /// Replace the per-class counts, keeping the distributions.
    pub fn with_counts(mut self, counts: &[usize]) -> Self {
        assert_eq!(counts.len(), self.classes.len());
        for (class, &count) in self.classes.iter_mut().zip(counts) {
            class.count = count;
        }
        self
    }

    pub fn total_count(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.classes.len() < 2 {
            return Err(DataError::InvalidSpec("need at least 2 classes".into()));
        }
        for class in &self.classes {
            if class.count == 0 {
                return Err(DataError::InvalidSpec(format!(
                    "class {:?} has zero count",
                    class.name
                )));
            }
            if class.features.len() != self.feature_names.len() {
                return Err(DataError::InvalidSpec(format!(
                    "class {:?} has {} feature dists, expected {}",
                    class.name,
                    class.features.len(),
                    self.feature_names.len()
                )));
            }
            if let Some(bad) = class.features.iter().find(|f| !(f.scale > 0.0)) {
                return Err(DataError::InvalidSpec(format!(
                    "class {:?} has non-positive scale {}",
                    class.name, bad.scale
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema, DataError> {
        FeatureSchema::new(
            self.feature_names.clone(),
            self.label_column.clone(),
            self.classes.iter().map(|c| c.name.clone()).collect(),
        )
    }

    /// Draw the dataset: classes in spec order, rows per class in draw
    /// order, bit-identical for a fixed seed.
    pub fn generate(&self) -> Result<Dataset, DataError> {
        self.validate()?;
        let schema = self.schema()?;
        let d = self.feature_names.len();
        let n = self.total_count();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for (class_ix, class) in self.classes.iter().enumerate() {
            let dists: Vec<Normal<f64>> = class
                .features
                .iter()
                .map(|f| Normal::new(f.loc, f.scale).expect("validated scale"))
                .collect();
            for _ in 0..class.count {
                for dist in &dists {
                    data.push(dist.sample(&mut rng));
                }
                labels.push(class_ix);
            }
        }
        Dataset::new(Matrix::from_vec(n, d, data), labels, schema, false)
    }
}
