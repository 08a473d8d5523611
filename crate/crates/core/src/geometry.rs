//! Update vectors and the cosine-distance machinery shared by every defense.
//!
//! Model parameters are flattened into one `UpdateVector` per client per
//! round. Detection operates on pairwise cosine distances between those
//! vectors (usually after magnitude normalization), so the numeric contracts
//! here (exact symmetry, zero diagonal, clamped range) are what the rest of
//! the crate leans on.

use std::fmt;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies a client within a federation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub usize);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A client's flattened model parameters for one round.
///
/// Construction guarantees the values are non-empty and finite; everything
/// downstream relies on that.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateVector {
    client_id: ClientId,
    round: u64,
    values: Vec<f64>,
}

impl UpdateVector {
    pub fn new(client_id: ClientId, round: u64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyUpdate { client: client_id });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteUpdate { client: client_id });
        }
        Ok(Self {
            client_id,
            round,
            values,
        })
    }

    /// Same client and round, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.client_id, self.round, values)
    }

    pub fn client_id(&self) -> ClientId {
        self.client_id
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of parameters in the vector.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Euclidean magnitude.
    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ordered tensor shapes of a flattened parameter collection.
///
/// Captured at flatten time so the inverse mapping is unambiguous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeSignature(Vec<Vec<usize>>);

impl ShapeSignature {
    pub fn of(tensors: &[ArrayViewD<'_, f64>]) -> Self {
        Self(tensors.iter().map(|t| t.shape().to_vec()).collect())
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.0
    }

    /// Total number of scalar parameters across all tensors.
    pub fn total_len(&self) -> usize {
        self.0.iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Flattens an ordered collection of parameter tensors into one vector.
///
/// Tensors are traversed in the order given, row-major within each tensor.
/// Fails on an empty collection, an empty tensor, or any non-finite value,
/// naming the offending tensor by position.
pub fn flatten(
    client_id: ClientId,
    round: u64,
    tensors: &[ArrayViewD<'_, f64>],
) -> Result<UpdateVector> {
    if tensors.is_empty() {
        return Err(Error::EmptyParameters);
    }
    let mut values = Vec::with_capacity(tensors.iter().map(|t| t.len()).sum());
    for (index, tensor) in tensors.iter().enumerate() {
        if tensor.is_empty() {
            return Err(Error::EmptyTensor { index });
        }
        for &v in tensor.iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteParameter { index });
            }
            values.push(v);
        }
    }
    UpdateVector::new(client_id, round, values)
}

/// Rebuilds parameter tensors from a flat slice, inverse of [`flatten`].
pub fn unflatten(values: &[f64], signature: &ShapeSignature) -> Result<Vec<ArrayD<f64>>> {
    let expected = signature.total_len();
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: values.len(),
        });
    }
    let mut tensors = Vec::with_capacity(signature.shapes().len());
    let mut offset = 0;
    for shape in signature.shapes() {
        let len: usize = shape.iter().product();
        let chunk = values[offset..offset + len].to_vec();
        let tensor = ArrayD::from_shape_vec(IxDyn(shape), chunk)
            .expect("chunk length matches shape by construction");
        tensors.push(tensor);
        offset += len;
    }
    Ok(tensors)
}

/// Scales an update to unit Euclidean norm.
pub fn normalize(update: &UpdateVector) -> Result<UpdateVector> {
    let magnitude = update.norm();
    if magnitude <= 0.0 {
        return Err(Error::ZeroNormUpdate {
            client: update.client_id(),
        });
    }
    let values = update.values().iter().map(|v| v / magnitude).collect();
    update.with_values(values)
}

/// Cosine distance `1 - cos(a, b)`, clamped to `[0, 2]`.
///
/// Fails on mismatched lengths or a zero-norm operand.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::InvalidDistanceMatrix {
            reason: "cosine distance of a zero-norm vector".into(),
        });
    }
    Ok((1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0))
}

/// Symmetric matrix of pairwise cosine distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major entries, validating shape, symmetry,
    /// the zero diagonal, and the `[0, 2]` range.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidDistanceMatrix {
                reason: format!(
                    "expected {} entries for n = {n}, got {}",
                    n * n,
                    entries.len()
                ),
            });
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::InvalidDistanceMatrix {
                    reason: format!("nonzero diagonal at ({i}, {i})"),
                });
            }
            for j in 0..n {
                let d = entries[i * n + j];
                if !d.is_finite() || !(0.0..=2.0).contains(&d) {
                    return Err(Error::InvalidDistanceMatrix {
                        reason: format!("entry ({i}, {j}) = {d} outside [0, 2]"),
                    });
                }
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::InvalidDistanceMatrix {
                        reason: format!("asymmetry at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Number of clients the matrix covers.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of bounds");
        self.entries[i * self.n + j]
    }
}

/// Pairwise cosine distances between updates, in the order given.
///
/// Each pair is computed once and mirrored, so the result is exactly
/// symmetric; the diagonal is exactly zero.
pub fn pairwise_distances(updates: &[UpdateVector]) -> Result<DistanceMatrix> {
    let n = updates.len();
    if n < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: n });
    }
    check_uniform_dimension(updates)?;
    for u in updates {
        if u.norm() <= 0.0 {
            return Err(Error::ZeroNormUpdate {
                client: u.client_id(),
            });
        }
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(updates[i].values(), updates[j].values())?;
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, entries })
}

/// Dimension shared by all updates; fails if the roster is empty or ragged.
pub fn check_uniform_dimension(updates: &[UpdateVector]) -> Result<usize> {
    let first = updates.first().ok_or(Error::EmptyAggregation)?;
    let expected = first.dim();
    for u in updates {
        if u.dim() != expected {
            return Err(Error::UpdateLengthMismatch {
                client: u.client_id(),
                expected,
                got: u.dim(),
            });
        }
    }
    Ok(expected)
}

/// Indices that visit `updates` in ascending client-id order.
///
/// Defenses process rosters through this ordering so their output is
/// independent of presentation order. Fails on duplicate ids.
pub fn canonical_order(updates: &[UpdateVector]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| updates[i].client_id());
    for pair in order.windows(2) {
        if updates[pair[0]].client_id() == updates[pair[1]].client_id() {
            return Err(Error::DuplicateClient {
                client: updates[pair[0]].client_id(),
            });
        }
    }
    Ok(order)
}
