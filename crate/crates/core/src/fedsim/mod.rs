//! Desk-scale federated learning simulation: synthetic task, linear softmax
//! clients, and the defended aggregation loop.

pub mod model;
pub mod round;
pub mod task;

pub use model::GlobalModel;
pub use round::{fedavg, local_train, RoundRecord, Simulation, TrainConfig};
pub use task::{generate_task, partition_clients, Dataset, SyntheticTask, TaskConfig};
