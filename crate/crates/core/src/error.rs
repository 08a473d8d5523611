//! Error type shared across the crate.

use crate::geometry::ClientId;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no parameter tensors to flatten")]
    EmptyParameters,

    #[error("parameter tensor {index} is empty")]
    EmptyTensor { index: usize },

    #[error("parameter tensor {index} contains a non-finite value")]
    NonFiniteParameter { index: usize },

    #[error("update from client {client} is empty")]
    EmptyUpdate { client: ClientId },

    #[error("update from client {client} contains a non-finite value")]
    NonFiniteUpdate { client: ClientId },

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("update from client {client} has length {got}, expected {expected}")]
    UpdateLengthMismatch {
        client: ClientId,
        expected: usize,
        got: usize,
    },

    #[error("update from client {client} has zero norm")]
    ZeroNormUpdate { client: ClientId },

    #[error("duplicate client id {client} in round roster")]
    DuplicateClient { client: ClientId },

    #[error("invalid distance matrix: {reason}")]
    InvalidDistanceMatrix { reason: String },

    #[error("population too small: need at least {needed} clients, got {got}")]
    PopulationTooSmall { needed: usize, got: usize },

    #[error("power iteration failed to converge within {max_iterations} iterations")]
    PowerIterationDiverged { max_iterations: usize },

    #[error("could not place {num_classes} class means at separation {separation} in {feature_dim} dimensions")]
    MeansPlacement {
        num_classes: usize,
        feature_dim: usize,
        separation: f64,
    },

    #[error("non-finite loss in local training at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("defense excluded every client in round {round}")]
    AllClientsExcluded { round: u64 },

    #[error("no updates to aggregate")]
    EmptyAggregation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot read config file '{path}': {source}")]
    ConfigRead {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot parse config file '{path}': {message}")]
    ConfigParse { path: String, message: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("cannot write output '{path}': {message}")]
    OutputWrite { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
