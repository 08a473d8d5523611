//! Linear softmax classifier whose parameters travel as flat update vectors.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::fedsim::task::Dataset;
use crate::geometry::{self, ClientId, ShapeSignature, UpdateVector};

/// Per-class weight matrix plus bias; logits are `x W^T + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalModel {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl GlobalModel {
    /// All-zero initialization, the starting point of every simulation.
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((num_classes, feature_dim)),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::LengthMismatch {
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        if !weights.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "model parameters must be finite".into(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Tensor shapes in flattening order: weights first, then bias.
    pub fn shape_signature(&self) -> ShapeSignature {
        ShapeSignature::of(&[self.weights.view().into_dyn(), self.bias.view().into_dyn()])
    }

    /// Flattens the full parameter set into an update vector.
    pub fn to_update(&self, client_id: ClientId, round: u64) -> Result<UpdateVector> {
        geometry::flatten(
            client_id,
            round,
            &[self.weights.view().into_dyn(), self.bias.view().into_dyn()],
        )
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_values(num_classes: usize, feature_dim: usize, values: &[f64]) -> Result<Self> {
        let expected = num_classes * feature_dim + num_classes;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        let split = num_classes * feature_dim;
        let weights = Array2::from_shape_vec((num_classes, feature_dim), values[..split].to_vec())
            .expect("length checked above");
        let bias = Array1::from_vec(values[split..].to_vec());
        Self::from_parts(weights, bias)
    }

    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        features.dot(&self.weights.t()) + &self.bias
    }

    /// Predicted class per row; ties resolve to the lowest class index.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(features)
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for (class, &value) in row.iter().enumerate() {
                    if value > row[best] {
                        best = class;
                    }
                }
                best
            })
            .collect()
    }

    /// Fraction of samples classified correctly.
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let predictions = self.predict(data.features().view());
        let correct = predictions
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count();
        correct as f64 / data.len() as f64
    }

    /// Mean cross-entropy loss and its gradients over a batch.
    ///
    /// Softmax is computed with the max-subtraction trick, so finite
    /// parameters and features yield a finite loss.
    pub fn loss_and_gradients(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> (f64, Array2<f64>, Array1<f64>) {
        let batch = features.nrows();
        assert!(batch > 0, "empty batch");
        assert_eq!(batch, labels.len(), "features and labels must align");

        let logits = self.logits(features);
        let mut loss = 0.0;
        let mut dlogits = Array2::zeros(logits.raw_dim());
        for (i, row) in logits.outer_iter().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Array1<f64> = row.mapv(|z| (z - max).exp());
            let sum = exp.sum();
            loss += sum.ln() + max - row[labels[i]];
            let probs = exp / sum;
            for (class, &p) in probs.iter().enumerate() {
                let target = f64::from(labels[i] == class);
                dlogits[(i, class)] = (p - target) / batch as f64;
            }
        }
        let grad_weights = dlogits.t().dot(&features);
        let grad_bias = dlogits.sum_axis(Axis(0));
        (loss / batch as f64, grad_weights, grad_bias)
    }

    /// One gradient-descent step in place.
    pub fn step(
        &mut self,
        learning_rate: f64,
        grad_weights: &Array2<f64>,
        grad_bias: &Array1<f64>,
    ) {
        self.weights.scaled_add(-learning_rate, grad_weights);
        self.bias.scaled_add(-learning_rate, grad_bias);
    }
}
