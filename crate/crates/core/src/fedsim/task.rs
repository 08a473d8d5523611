//! Synthetic classification task: isotropic Gaussian blobs with a
//! controllable class separation, split into train/test and partitioned into
//! per-client shards.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeding;

/// Share of samples that go to the training split.
pub const TRAIN_FRACTION: f64 = 0.7;

/// Shape and difficulty of the synthetic task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub num_samples: usize,
    /// Minimum Euclidean distance between class means.
    pub separation: f64,
    /// Variance of the isotropic Gaussian around each mean.
    pub covariance_scale: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            num_classes: 9,
            feature_dim: 64,
            num_samples: 5000,
            separation: 6.0,
            covariance_scale: 1.0,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if self.num_samples < 2 * self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "num_samples {} too small for {} classes",
                self.num_samples, self.num_classes
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "separation {} must be positive and finite",
                self.separation
            )));
        }
        if !(self.covariance_scale > 0.0 && self.covariance_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "covariance_scale {} must be positive and finite",
                self.covariance_scale
            )));
        }
        Ok(())
    }
}

/// Labeled feature matrix; rows are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidConfig("dataset has no samples".into()));
        }
        if let Some(bad) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {} at sample {bad} exceeds {} classes",
                labels[bad], num_classes
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "dataset contains a non-finite feature".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            features,
            labels,
            num_classes: self.num_classes,
        }
    }
}

/// Generated task with its train/test split.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub train: Dataset,
    pub test: Dataset,
    class_means: Array2<f64>,
}

impl SyntheticTask {
    pub fn class_means(&self) -> &Array2<f64> {
        &self.class_means
    }
}

/// Samples a labeled blob task and splits it into train and test.
///
/// Class sizes are balanced to within one sample. The split shuffles with its
/// own seeded stream and rounds the train side to `round(0.7 * n)`.
pub fn generate_task(config: &TaskConfig, seed: u64) -> Result<SyntheticTask> {
    config.validate()?;
    let k = config.num_classes;
    let d = config.feature_dim;
    let n = config.num_samples;

    let mut means_rng = seeding::stream(seed, "means", &[]);
    let class_means = place_means(config, &mut means_rng, 1000 * k)?;

    let std = config.covariance_scale.sqrt();
    let mut sample_rng = seeding::stream(seed, "samples", &[]);
    let base = n / k;
    let remainder = n % k;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for class in 0..k {
        let count = base + usize::from(class < remainder);
        for _ in 0..count {
            for col in 0..d {
                let noise: f64 = StandardNormal.sample(&mut sample_rng);
                features[(row, col)] = class_means[(class, col)] + std * noise;
            }
            labels.push(class);
            row += 1;
        }
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut split_rng = seeding::stream(seed, "split", &[]);
    indices.shuffle(&mut split_rng);
    let train_count = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut train_idx = indices[..train_count].to_vec();
    let mut test_idx = indices[train_count..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let full = Dataset::new(features, labels, k)?;
    Ok(SyntheticTask {
        train: full.subset(&train_idx),
        test: full.subset(&test_idx),
        class_means,
    })
}

/// Places class means pairwise at least `separation` apart.
///
/// With enough dimensions the means sit on a scaled standard basis, which
/// spaces them at exactly `separation`. Otherwise candidates are rejection
/// sampled from a bounded cube; exhausting the attempt budget is an error.
fn place_means(
    config: &TaskConfig,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<Array2<f64>> {
    let k = config.num_classes;
    let d = config.feature_dim;
    let s = config.separation;

    if k <= d {
        let scale = s / 2.0_f64.sqrt();
        let mut means = Array2::zeros((k, d));
        for class in 0..k {
            means[(class, class)] = scale;
        }
        return Ok(means);
    }

    let half_side = s * (k as f64).powf(1.0 / d as f64);
    let mut accepted: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while accepted.len() < k {
        if attempts >= max_attempts {
            return Err(Error::MeansPlacement {
                num_classes: k,
                feature_dim: d,
                separation: s,
            });
        }
        attempts += 1;
        let candidate = Array1::from_iter((0..d).map(|_| rng.random_range(-half_side..=half_side)));
        let far_enough = accepted.iter().all(|m| {
            let diff = &candidate - m;
            diff.dot(&diff).sqrt() >= s
        });
        if far_enough {
            accepted.push(candidate);
        }
    }
    let mut means = Array2::zeros((k, d));
    for (class, m) in accepted.iter().enumerate() {
        means.row_mut(class).assign(m);
    }
    Ok(means)
}

/// Splits training data into equal-size (within one) disjoint client shards.
pub fn partition_clients(train: &Dataset, n_clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n_clients == 0 {
        return Err(Error::InvalidConfig("need at least one client".into()));
    }
    if train.len() < n_clients {
        return Err(Error::InvalidConfig(format!(
            "{} training samples cannot cover {} clients",
            train.len(),
            n_clients
        )));
    }
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut rng = seeding::stream(seed, "partition", &[]);
    indices.shuffle(&mut rng);

    let base = train.len() / n_clients;
    let remainder = train.len() % n_clients;
    let mut shards = Vec::with_capacity(n_clients);
    let mut offset = 0;
    for client in 0..n_clients {
        let size = base + usize::from(client < remainder);
        let mut shard_idx = indices[offset..offset + size].to_vec();
        shard_idx.sort_unstable();
        shards.push(train.subset(&shard_idx));
        offset += size;
    }
    Ok(shards)
}
