//! Attack-strength calibration.
//!
//! Noise is tuned until an undefended run loses 20 to 30 percent of its
//! attack-free final accuracy (relative, mean over up to three seeds). The
//! label-corruption fraction is the smallest ladder step that costs a solo
//! model at least 30 percentage points of test accuracy.

use crate::error::{Error, Result};
use crate::fedsim::{self, GlobalModel, TrainConfig};
use crate::geometry::ClientId;
use crate::harness::config::{AttackKind, DefenseKind, ExperimentConfig, Regime};
use crate::harness::run_seed;
use crate::{attacks, seeding};

/// Seeds used to estimate calibration accuracies.
const CALIBRATION_SEEDS: usize = 3;

const ANA_MIN_DROP: f64 = 0.20;
const ANA_MAX_DROP: f64 = 0.30;
const ANA_LADDER_START: f64 = 0.05;
const ANA_MAX_DOUBLINGS: usize = 20;
const ANA_MAX_BISECTIONS: usize = 40;

const CORRUPTION_TARGET_DROP: f64 = 0.30;

/// Noise scale fitted to the target relative accuracy drop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseCalibration {
    pub sigma: f64,
    pub baseline_accuracy: f64,
    pub attacked_accuracy: f64,
    /// `(baseline - attacked) / baseline`.
    pub relative_drop: f64,
}

/// Corruption fraction fitted to the target absolute accuracy drop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionCalibration {
    pub fraction: f64,
    pub clean_accuracy: f64,
    pub corrupted_accuracy: f64,
    /// `clean - corrupted`, in accuracy points.
    pub absolute_drop: f64,
}

/// Undefended twin of `base` with the calibration seed budget.
fn undefended_twin(base: &ExperimentConfig, attack: AttackKind) -> ExperimentConfig {
    let mut twin = base.clone();
    twin.defense = DefenseKind::None;
    twin.attack = attack;
    twin.regime = Regime::Fixed;
    twin.probability = 1.0;
    if attack != AttackKind::None && twin.malfunctioning == 0 {
        twin.malfunctioning = 3.min(twin.clients);
    }
    twin.seeds = base.seeds[..CALIBRATION_SEEDS.min(base.seeds.len())].to_vec();
    twin
}

/// Mean final-round accuracy over the twin's seeds.
fn mean_final_accuracy(config: &ExperimentConfig) -> Result<f64> {
    config.validate()?;
    let mut total = 0.0;
    for &seed in &config.seeds {
        let records = run_seed(config, seed)?;
        total += records.last().expect("rounds >= 1").test_accuracy;
    }
    Ok(total / config.seeds.len() as f64)
}

/// Finds a noise scale whose undefended relative accuracy drop lands in the
/// 20 to 30 percent band: a doubling ladder brackets the band, bisection
/// closes in.
pub fn calibrate_ana_sigma(base: &ExperimentConfig) -> Result<NoiseCalibration> {
    let baseline = mean_final_accuracy(&undefended_twin(base, AttackKind::None))?;
    if baseline <= 0.0 {
        return Err(Error::Calibration(format!(
            "attack-free baseline accuracy {baseline} leaves no room to degrade"
        )));
    }

    let evaluate = |sigma: f64| -> Result<(f64, f64)> {
        let mut twin = undefended_twin(base, AttackKind::Ana);
        twin.ana_sigma = sigma;
        let accuracy = mean_final_accuracy(&twin)?;
        Ok((accuracy, (baseline - accuracy) / baseline))
    };
    let finish = |sigma: f64, accuracy: f64, drop: f64| NoiseCalibration {
        sigma,
        baseline_accuracy: baseline,
        attacked_accuracy: accuracy,
        relative_drop: drop,
    };

    let mut low = 0.0;
    let mut high = None;
    let mut sigma = ANA_LADDER_START;
    for _ in 0..ANA_MAX_DOUBLINGS {
        let (accuracy, drop) = evaluate(sigma)?;
        if (ANA_MIN_DROP..=ANA_MAX_DROP).contains(&drop) {
            return Ok(finish(sigma, accuracy, drop));
        }
        if drop < ANA_MIN_DROP {
            low = sigma;
            sigma *= 2.0;
        } else {
            high = Some(sigma);
            break;
        }
    }
    let Some(mut high) = high else {
        return Err(Error::Calibration(format!(
            "noise ladder reached sigma {sigma} without hitting a {ANA_MIN_DROP}-{ANA_MAX_DROP} drop"
        )));
    };

    for _ in 0..ANA_MAX_BISECTIONS {
        let mid = 0.5 * (low + high);
        let (accuracy, drop) = evaluate(mid)?;
        if (ANA_MIN_DROP..=ANA_MAX_DROP).contains(&drop) {
            return Ok(finish(mid, accuracy, drop));
        }
        if drop < ANA_MIN_DROP {
            low = mid;
        } else {
            high = mid;
        }
    }
    Err(Error::Calibration(
        "noise bisection did not settle inside the target band".into(),
    ))
}

/// Accuracy of a model trained from zeros on one shard for the full round
/// budget (rounds times local epochs), evaluated on the task's test split.
fn solo_accuracy(base: &ExperimentConfig, seed: u64, corruption: Option<f64>) -> Result<f64> {
    let task = fedsim::generate_task(&base.task_config(), seeding::mix(seed, "task", &[]))?;
    let shards = fedsim::partition_clients(
        &task.train,
        base.clients,
        seeding::mix(seed, "partition", &[]),
    )?;
    let shard = match corruption {
        None => shards[0].clone(),
        Some(fraction) => {
            attacks::corrupt_labels(&shards[0], fraction, seeding::mix(seed, "corrupt", &[0]))?
        }
    };
    let train = TrainConfig {
        epochs: base.rounds as usize * base.local_epochs,
        ..base.train_config()
    };
    let zeros = GlobalModel::zeros(base.num_classes, base.feature_dim);
    let update = fedsim::local_train(
        &zeros,
        &shard,
        &train,
        ClientId(0),
        0,
        seeding::mix(seed, "solo-train", &[]),
    )?;
    let model = GlobalModel::from_values(base.num_classes, base.feature_dim, update.values())?;
    Ok(model.accuracy(&task.test))
}

/// Walks the corruption ladder (0.10 to 0.95 in steps of 0.05) and returns
/// the smallest fraction whose solo-training accuracy drop reaches 30 points.
pub fn calibrate_corruption_fraction(base: &ExperimentConfig) -> Result<CorruptionCalibration> {
    base.validate()?;
    let seeds = &base.seeds[..CALIBRATION_SEEDS.min(base.seeds.len())];

    let mut clean_total = 0.0;
    for &seed in seeds {
        clean_total += solo_accuracy(base, seed, None)?;
    }
    let clean = clean_total / seeds.len() as f64;

    for step in 2..=19 {
        let fraction = step as f64 * 0.05;
        let mut corrupted_total = 0.0;
        for &seed in seeds {
            corrupted_total += solo_accuracy(base, seed, Some(fraction))?;
        }
        let corrupted = corrupted_total / seeds.len() as f64;
        let drop = clean - corrupted;
        if drop >= CORRUPTION_TARGET_DROP {
            return Ok(CorruptionCalibration {
                fraction,
                clean_accuracy: clean,
                corrupted_accuracy: corrupted,
                absolute_drop: drop,
            });
        }
    }
    Err(Error::Calibration(format!(
        "no corruption fraction up to 0.95 cost {CORRUPTION_TARGET_DROP} accuracy points"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RawConfig;

    fn tiny_base() -> ExperimentConfig {
        ExperimentConfig::resolve(RawConfig {
            num_classes: Some(3),
            feature_dim: Some(8),
            num_samples: Some(400),
            clients: Some(5),
            rounds: Some(4),
            attack: Some("ana".into()),
            malfunctioning: Some(2),
            seeds: Some(2),
            batch_size: Some(16),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn noise_calibration_lands_in_the_band() {
        let result = calibrate_ana_sigma(&tiny_base()).unwrap();
        assert!(result.sigma > 0.0);
        assert!(
            (0.20..=0.30).contains(&result.relative_drop),
            "drop = {}",
            result.relative_drop
        );
        assert!(result.attacked_accuracy < result.baseline_accuracy);
    }

    #[test]
    fn corruption_calibration_finds_a_ladder_step() {
        let mut base = tiny_base();
        base.attack = AttackKind::Unreliable;
        let result = calibrate_corruption_fraction(&base).unwrap();
        assert!(result.fraction >= 0.10 && result.fraction <= 0.95);
        assert!(
            result.absolute_drop >= 0.30,
            "drop = {}",
            result.absolute_drop
        );
        // Smallest qualifying step: the step below must not qualify.
        if result.fraction > 0.10 {
            let mut below_total = 0.0;
            let seeds = &base.seeds[..2];
            for &seed in seeds {
                below_total += solo_accuracy(&base, seed, Some(result.fraction - 0.05)).unwrap();
            }
            let below_drop = result.clean_accuracy - below_total / seeds.len() as f64;
            assert!(below_drop < 0.30, "below drop = {below_drop}");
        }
    }

    #[test]
    fn calibration_is_deterministic() {
        let a = calibrate_ana_sigma(&tiny_base()).unwrap();
        let b = calibrate_ana_sigma(&tiny_base()).unwrap();
        assert_eq!(a, b);
    }
}
