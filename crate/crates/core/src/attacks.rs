//! Malfunction injectors and the per-round schedule that drives them.
//!
//! Three mechanisms: additive Gaussian noise on the update, sign flipping
//! with a scale constant, and label corruption in the client's training
//! shard. A combined mode cycles through all three across the designated
//! clients.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fedsim::task::Dataset;
use crate::geometry::{ClientId, UpdateVector};
use crate::seeding;

/// Top-level malfunction mechanism for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanism {
    /// Additive Gaussian noise on the submitted update.
    Ana,
    /// Sign flip scaled by a constant.
    Sfa,
    /// Training on a label-corrupted shard.
    Unreliable,
    /// Round-robin over the three mechanisms by client rank.
    Combined,
}

/// Concrete mechanism applied to one client in one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubMechanism {
    Ana,
    Sfa,
    Unreliable,
}

/// Which clients malfunction, how, and how hard.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub mechanism: Mechanism,
    /// Designated malfunctioning clients.
    pub clients: BTreeSet<ClientId>,
    /// Per-round probability that a designated client misbehaves.
    pub probability: f64,
    /// Noise scale for the Gaussian mechanism.
    pub ana_sigma: f64,
    /// Scale constant for the sign-flip mechanism.
    pub sfa_constant: f64,
    /// Fraction of a shard's labels corrupted for unreliable clients.
    pub corruption_fraction: f64,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::InvalidConfig(
                "attack spec designates no clients".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidConfig(format!(
                "malfunction probability {} outside [0, 1]",
                self.probability
            )));
        }
        if !self.ana_sigma.is_finite() || self.ana_sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise sigma {} must be finite and non-negative",
                self.ana_sigma
            )));
        }
        if !self.sfa_constant.is_finite() || self.sfa_constant <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sign-flip constant {} must be finite and positive",
                self.sfa_constant
            )));
        }
        if !(0.0..=1.0).contains(&self.corruption_fraction) {
            return Err(Error::InvalidConfig(format!(
                "corruption fraction {} outside [0, 1]",
                self.corruption_fraction
            )));
        }
        Ok(())
    }

    /// Mechanism assigned to a designated client, or `None` for benign ones.
    ///
    /// Combined mode cycles noise, sign flip, label corruption over the
    /// designated clients in ascending id order; the assignment is fixed for
    /// the whole run.
    pub fn sub_mechanism(&self, client: ClientId) -> Option<SubMechanism> {
        let rank = self.clients.iter().position(|&c| c == client)?;
        Some(match self.mechanism {
            Mechanism::Ana => SubMechanism::Ana,
            Mechanism::Sfa => SubMechanism::Sfa,
            Mechanism::Unreliable => SubMechanism::Unreliable,
            Mechanism::Combined => match rank % 3 {
                0 => SubMechanism::Ana,
                1 => SubMechanism::Sfa,
                _ => SubMechanism::Unreliable,
            },
        })
    }

    /// Clients that train on a corrupted shard when active.
    pub fn unreliable_clients(&self) -> BTreeSet<ClientId> {
        self.clients
            .iter()
            .copied()
            .filter(|&c| self.sub_mechanism(c) == Some(SubMechanism::Unreliable))
            .collect()
    }
}

/// Sign-flip attack: every coordinate becomes `-constant * value`.
pub fn apply_sfa(update: &UpdateVector, constant: f64) -> Result<UpdateVector> {
    assert!(constant > 0.0, "sign-flip constant must be positive");
    let values = update.values().iter().map(|v| -constant * v).collect();
    update.with_values(values)
}

/// Additive noise attack: adds iid Gaussian noise to every coordinate.
pub fn apply_ana(update: &UpdateVector, sigma: f64, seed: u64) -> Result<UpdateVector> {
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "sigma must be non-negative"
    );
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = seeding::stream(seed, "ana-noise", &[]);
    let values = update
        .values()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    update.with_values(values)
}

/// Replaces the labels of an exact seeded sample of the shard with uniformly
/// chosen different classes. Features are untouched.
///
/// Exactly `floor(fraction * len)` samples change.
pub fn corrupt_labels(shard: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    assert!(
        (0.0..=1.0).contains(&fraction),
        "corruption fraction must be in [0, 1]"
    );
    let k = shard.num_classes();
    if k < 2 {
        return Err(Error::InvalidConfig(
            "cannot corrupt labels with fewer than two classes".into(),
        ));
    }
    let count = (fraction * shard.len() as f64).floor() as usize;
    let mut rng = seeding::stream(seed, "corrupt-labels", &[]);
    let chosen = rand::seq::index::sample(&mut rng, shard.len(), count);
    let mut labels = shard.labels().to_vec();
    for idx in chosen {
        let old = labels[idx];
        let draw = rng.random_range(0..k - 1);
        labels[idx] = if draw >= old { draw + 1 } else { draw };
    }
    Dataset::new(shard.features().clone(), labels, k)
}

/// Designated clients that actually misbehave this round.
///
/// Each (round, client) pair gets an independent Bernoulli draw from its own
/// stream, so schedules are reproducible and insensitive to roster order.
pub fn schedule_round(spec: &AttackSpec, round: u64, master_seed: u64) -> BTreeSet<ClientId> {
    spec.clients
        .iter()
        .copied()
        .filter(|client| {
            let mut rng = seeding::stream(master_seed, "schedule", &[round, client.0 as u64]);
            rng.random::<f64>() < spec.probability
        })
        .collect()
}
