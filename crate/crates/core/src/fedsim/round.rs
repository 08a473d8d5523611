//! Federated training loop: seeded local training, defended aggregation,
//! and per-round bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Axis;
use rand::seq::SliceRandom;

use crate::asmr::DetectionVerdict;
use crate::attacks::{self, AttackSpec, SubMechanism};
use crate::defense::Defense;
use crate::error::{Error, Result};
use crate::fedsim::model::GlobalModel;
use crate::fedsim::task::{self, Dataset, SyntheticTask, TaskConfig};
use crate::geometry::{self, ClientId, UpdateVector};
use crate::seeding;

/// Local training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 0.1,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mini-batch gradient descent from the current global model on one shard.
///
/// Batch order reshuffles every epoch from the given seed's stream; the final
/// short batch is kept. Returns the client's full parameter vector, not a
/// delta. A non-finite loss aborts with the offending epoch and batch.
pub fn local_train(
    global: &GlobalModel,
    shard: &Dataset,
    config: &TrainConfig,
    client_id: ClientId,
    round: u64,
    seed: u64,
) -> Result<UpdateVector> {
    config.validate()?;
    let mut model = global.clone();
    let mut rng = seeding::stream(seed, "batches", &[]);
    let mut indices: Vec<usize> = (0..shard.len()).collect();
    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let features = shard.features().select(Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| shard.labels()[i]).collect();
            let (loss, grad_w, grad_b) = model.loss_and_gradients(features.view(), &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            model.step(config.learning_rate, &grad_w, &grad_b);
        }
    }
    model.to_update(client_id, round)
}

/// Element-wise mean of the kept updates, reshaped into a global model.
pub fn fedavg(
    updates: &[UpdateVector],
    num_classes: usize,
    feature_dim: usize,
) -> Result<GlobalModel> {
    if updates.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let dim = geometry::check_uniform_dimension(updates)?;
    let mut mean = vec![0.0; dim];
    for update in updates {
        for (acc, &v) in mean.iter_mut().zip(update.values()) {
            *acc += v;
        }
    }
    let n = updates.len() as f64;
    for v in &mut mean {
        *v /= n;
    }
    GlobalModel::from_values(num_classes, feature_dim, &mean)
}

/// Everything observable about one completed round.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: u64,
    /// Clients that actually misbehaved this round.
    pub ground_truth: BTreeSet<ClientId>,
    /// The defense's keep/exclude decision.
    pub verdict: DetectionVerdict,
    /// Global-model accuracy on the held-out test split after aggregation.
    pub test_accuracy: f64,
    /// Updates as submitted, before any exclusion.
    pub updates: Vec<UpdateVector>,
}

/// One federated run: fixed task, client shards, defense, and attack.
#[derive(Clone, Debug)]
pub struct Simulation {
    task: SyntheticTask,
    clean_shards: Vec<Dataset>,
    corrupted_shards: BTreeMap<ClientId, Dataset>,
    global: GlobalModel,
    defense: Defense,
    attack: Option<AttackSpec>,
    train_config: TrainConfig,
    master_seed: u64,
    completed_rounds: u64,
}

impl Simulation {
    /// Generates the task, partitions shards, corrupts the shards of
    /// unreliable clients once up front, and zero-initializes the model.
    pub fn new(
        task_config: &TaskConfig,
        n_clients: usize,
        defense: Defense,
        attack: Option<AttackSpec>,
        train_config: TrainConfig,
        master_seed: u64,
    ) -> Result<Self> {
        task_config.validate()?;
        train_config.validate()?;
        if n_clients == 0 {
            return Err(Error::InvalidConfig("need at least one client".into()));
        }
        if let Some(spec) = &attack {
            spec.validate()?;
            if let Some(&outside) = spec.clients.iter().find(|c| c.0 >= n_clients) {
                return Err(Error::InvalidConfig(format!(
                    "designated client {outside} is outside the population of {n_clients}"
                )));
            }
        }

        let task = task::generate_task(task_config, seeding::mix(master_seed, "task", &[]))?;
        let clean_shards = task::partition_clients(
            &task.train,
            n_clients,
            seeding::mix(master_seed, "partition", &[]),
        )?;

        let mut corrupted_shards = BTreeMap::new();
        if let Some(spec) = &attack {
            for client in spec.unreliable_clients() {
                let corrupted = attacks::corrupt_labels(
                    &clean_shards[client.0],
                    spec.corruption_fraction,
                    seeding::mix(master_seed, "corrupt", &[client.0 as u64]),
                )?;
                corrupted_shards.insert(client, corrupted);
            }
        }

        let global = GlobalModel::zeros(task_config.num_classes, task_config.feature_dim);
        Ok(Self {
            task,
            clean_shards,
            corrupted_shards,
            global,
            defense,
            attack,
            train_config,
            master_seed,
            completed_rounds: 0,
        })
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn n_clients(&self) -> usize {
        self.clean_shards.len()
    }

    pub fn completed_rounds(&self) -> u64 {
        self.completed_rounds
    }

    pub fn test_accuracy(&self) -> f64 {
        self.global.accuracy(&self.task.test)
    }

    /// Runs one round: local training (with scheduled malfunctions), defense,
    /// aggregation of the kept updates, evaluation.
    ///
    /// Fails if the defense keeps nobody.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let round = self.completed_rounds + 1;
        let ground_truth = self
            .attack
            .as_ref()
            .map(|spec| attacks::schedule_round(spec, round, self.master_seed))
            .unwrap_or_default();

        let mut updates = Vec::with_capacity(self.n_clients());
        for client in 0..self.n_clients() {
            let client_id = ClientId(client);
            let mechanism = if ground_truth.contains(&client_id) {
                self.attack
                    .as_ref()
                    .and_then(|spec| spec.sub_mechanism(client_id))
            } else {
                None
            };
            let shard = match mechanism {
                Some(SubMechanism::Unreliable) => &self.corrupted_shards[&client_id],
                _ => &self.clean_shards[client],
            };
            let update = local_train(
                &self.global,
                shard,
                &self.train_config,
                client_id,
                round,
                seeding::mix(self.master_seed, "local-train", &[round, client as u64]),
            )?;
            let update = match mechanism {
                Some(SubMechanism::Sfa) => {
                    let spec = self.attack.as_ref().expect("mechanism implies attack");
                    attacks::apply_sfa(&update, spec.sfa_constant)?
                }
                Some(SubMechanism::Ana) => {
                    let spec = self.attack.as_ref().expect("mechanism implies attack");
                    attacks::apply_ana(
                        &update,
                        spec.ana_sigma,
                        seeding::mix(self.master_seed, "ana", &[round, client as u64]),
                    )?
                }
                _ => update,
            };
            updates.push(update);
        }

        let verdict = self.defense.detect(&updates)?;
        self.global = aggregate_kept(
            &updates,
            &verdict,
            round,
            self.global.num_classes(),
            self.global.feature_dim(),
        )?;
        let test_accuracy = self.test_accuracy();
        self.completed_rounds = round;
        Ok(RoundRecord {
            round,
            ground_truth,
            verdict,
            test_accuracy,
            updates,
        })
    }

    /// Runs `rounds` rounds and returns their records.
    pub fn run(&mut self, rounds: u64) -> Result<Vec<RoundRecord>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}

/// Averages the kept updates into the next global model.
///
/// A verdict that keeps nobody aborts the run.
fn aggregate_kept(
    updates: &[UpdateVector],
    verdict: &DetectionVerdict,
    round: u64,
    num_classes: usize,
    feature_dim: usize,
) -> Result<GlobalModel> {
    if verdict.kept().is_empty() {
        return Err(Error::AllClientsExcluded { round });
    }
    let kept: Vec<UpdateVector> = updates
        .iter()
        .filter(|u| verdict.kept().contains(&u.client_id()))
        .cloned()
        .collect();
    fedavg(&kept, num_classes, feature_dim)
}
