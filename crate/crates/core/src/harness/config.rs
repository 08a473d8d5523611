//! Experiment configuration: defaults, the key/value config file, and
//! validation.
//!
//! Files are flat TOML (`key = value` lines). Unknown keys are rejected with
//! the offending name, so typos cannot silently fall back to defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackSpec, Mechanism};
use crate::defense::Defense;
use crate::error::{Error, Result};
use crate::fedsim::{TaskConfig, TrainConfig};
use crate::geometry::ClientId;

/// How malfunction schedules behave across rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Designated clients misbehave every round.
    Fixed,
    /// Designated clients misbehave per round with some probability.
    Dynamic,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Regime::Fixed),
            "dynamic" => Ok(Regime::Dynamic),
            other => Err(Error::InvalidConfig(format!(
                "unknown regime '{other}' (expected fixed|dynamic)"
            ))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Fixed => "fixed",
            Regime::Dynamic => "dynamic",
        })
    }
}

/// Defense selector as it appears in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseKind {
    None,
    Asmr,
    MKrum,
    Dnc,
    Cfl,
}

impl FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DefenseKind::None),
            "asmr" => Ok(DefenseKind::Asmr),
            "mkrum" => Ok(DefenseKind::MKrum),
            "dnc" => Ok(DefenseKind::Dnc),
            "cfl" => Ok(DefenseKind::Cfl),
            other => Err(Error::InvalidConfig(format!(
                "unknown defense '{other}' (expected none|asmr|mkrum|dnc|cfl)"
            ))),
        }
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefenseKind::None => "none",
            DefenseKind::Asmr => "asmr",
            DefenseKind::MKrum => "mkrum",
            DefenseKind::Dnc => "dnc",
            DefenseKind::Cfl => "cfl",
        })
    }
}

/// Attack selector as it appears in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Ana,
    Sfa,
    Unreliable,
    Combined,
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "ana" => Ok(AttackKind::Ana),
            "sfa" => Ok(AttackKind::Sfa),
            "unreliable" => Ok(AttackKind::Unreliable),
            "combined" => Ok(AttackKind::Combined),
            other => Err(Error::InvalidConfig(format!(
                "unknown attack '{other}' (expected none|ana|sfa|unreliable|combined)"
            ))),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::None => "none",
            AttackKind::Ana => "ana",
            AttackKind::Sfa => "sfa",
            AttackKind::Unreliable => "unreliable",
            AttackKind::Combined => "combined",
        })
    }
}

/// Config file contents before defaults are applied. Every field is optional;
/// command-line flags overwrite file values before resolution.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub num_classes: Option<usize>,
    pub feature_dim: Option<usize>,
    pub num_samples: Option<usize>,
    pub separation: Option<f64>,
    pub covariance_scale: Option<f64>,
    pub clients: Option<usize>,
    pub rounds: Option<u64>,
    pub local_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub defense: Option<String>,
    pub attack: Option<String>,
    pub regime: Option<String>,
    pub assumed_malicious: Option<usize>,
    pub malfunctioning: Option<usize>,
    pub probability: Option<f64>,
    pub ana_sigma: Option<f64>,
    pub sfa_constant: Option<f64>,
    pub corruption_fraction: Option<f64>,
    pub seeds: Option<usize>,
}

impl RawConfig {
    /// Parses a flat TOML config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigRead {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::ConfigParse { message, .. } => Error::ConfigParse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: "<inline>".into(),
            message: e.to_string(),
        })
    }
}

/// Fully resolved experiment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub num_samples: usize,
    pub separation: f64,
    pub covariance_scale: f64,
    pub clients: usize,
    pub rounds: u64,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub defense: DefenseKind,
    pub attack: AttackKind,
    pub regime: Regime,
    /// Bound assumed by Multi-Krum and the spectral filter.
    pub assumed_malicious: usize,
    /// Number of designated malfunctioning clients (the lowest ids).
    pub malfunctioning: usize,
    /// Per-round misbehavior probability for designated clients.
    pub probability: f64,
    pub ana_sigma: f64,
    pub sfa_constant: f64,
    pub corruption_fraction: f64,
    /// Master seeds, one simulation per entry.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::resolve(RawConfig::default()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Applies defaults to a raw config and validates the result.
    ///
    /// Regime-dependent defaults: a fixed regime designates 3 clients at
    /// probability 1.0 over 10 seeds; a dynamic regime designates 4 clients
    /// at probability 0.75 over 5 seeds.
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        let regime = match &raw.regime {
            Some(s) => s.parse()?,
            None => Regime::Fixed,
        };
        let defense = match &raw.defense {
            Some(s) => s.parse()?,
            None => DefenseKind::None,
        };
        let attack = match &raw.attack {
            Some(s) => s.parse()?,
            None => AttackKind::None,
        };
        let (default_malfunctioning, default_probability, default_seeds) = match regime {
            Regime::Fixed => (3, 1.0, 10),
            Regime::Dynamic => (4, 0.75, 5),
        };
        let malfunctioning = match attack {
            AttackKind::None => raw.malfunctioning.unwrap_or(0),
            _ => raw.malfunctioning.unwrap_or(default_malfunctioning),
        };
        if regime == Regime::Fixed {
            if let Some(p) = raw.probability {
                if p != 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "probability {p} conflicts with the fixed regime; use regime = \"dynamic\""
                    )));
                }
            }
        }
        let config = Self {
            num_classes: raw.num_classes.unwrap_or(9),
            feature_dim: raw.feature_dim.unwrap_or(64),
            num_samples: raw.num_samples.unwrap_or(5000),
            separation: raw.separation.unwrap_or(6.0),
            covariance_scale: raw.covariance_scale.unwrap_or(1.0),
            clients: raw.clients.unwrap_or(10),
            rounds: raw.rounds.unwrap_or(12),
            local_epochs: raw.local_epochs.unwrap_or(1),
            learning_rate: raw.learning_rate.unwrap_or(0.1),
            batch_size: raw.batch_size.unwrap_or(32),
            defense,
            attack,
            regime,
            assumed_malicious: raw.assumed_malicious.unwrap_or(3),
            malfunctioning,
            probability: raw.probability.unwrap_or(default_probability),
            ana_sigma: raw.ana_sigma.unwrap_or(1.0),
            sfa_constant: raw.sfa_constant.unwrap_or(1.0),
            corruption_fraction: raw.corruption_fraction.unwrap_or(0.5),
            seeds: (0..raw.seeds.unwrap_or(default_seeds) as u64).collect(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::resolve(RawConfig::from_file(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.task_config().validate()?;
        self.train_config().validate()?;
        if self.clients == 0 {
            return Err(Error::InvalidConfig("need at least one client".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("need at least one round".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("need at least one seed".into()));
        }
        if self.malfunctioning > self.clients {
            return Err(Error::InvalidConfig(format!(
                "{} malfunctioning clients exceed the population of {}",
                self.malfunctioning, self.clients
            )));
        }
        if self.attack != AttackKind::None && self.malfunctioning == 0 {
            return Err(Error::InvalidConfig(
                "attack requires at least one designated client".into(),
            ));
        }
        match self.defense {
            DefenseKind::None => {}
            DefenseKind::Asmr | DefenseKind::Cfl => {
                if self.clients < 3 {
                    return Err(Error::InvalidConfig(format!(
                        "defense {} needs at least 3 clients, got {}",
                        self.defense, self.clients
                    )));
                }
            }
            DefenseKind::MKrum => {
                if self.clients < self.assumed_malicious + 3 {
                    return Err(Error::InvalidConfig(format!(
                        "mkrum needs clients >= assumed_malicious + 3, got {} and {}",
                        self.clients, self.assumed_malicious
                    )));
                }
            }
            DefenseKind::Dnc => {
                if self.clients < self.assumed_malicious + 1 {
                    return Err(Error::InvalidConfig(format!(
                        "dnc needs clients >= assumed_malicious + 1, got {} and {}",
                        self.clients, self.assumed_malicious
                    )));
                }
            }
        }
        if let Some(spec) = self.attack_spec()? {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            num_samples: self.num_samples,
            separation: self.separation,
            covariance_scale: self.covariance_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.local_epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
        }
    }

    pub fn defense(&self) -> Defense {
        match self.defense {
            DefenseKind::None => Defense::None,
            DefenseKind::Asmr => Defense::Asmr,
            DefenseKind::MKrum => Defense::MKrum {
                assumed_malicious: self.assumed_malicious,
            },
            DefenseKind::Dnc => Defense::Dnc {
                assumed_malicious: self.assumed_malicious,
            },
            DefenseKind::Cfl => Defense::Cfl,
        }
    }

    /// Attack specification, or `None` when the run is attack-free. The
    /// designated clients are the `malfunctioning` lowest ids.
    pub fn attack_spec(&self) -> Result<Option<AttackSpec>> {
        let mechanism = match self.attack {
            AttackKind::None => return Ok(None),
            AttackKind::Ana => Mechanism::Ana,
            AttackKind::Sfa => Mechanism::Sfa,
            AttackKind::Unreliable => Mechanism::Unreliable,
            AttackKind::Combined => Mechanism::Combined,
        };
        Ok(Some(AttackSpec {
            mechanism,
            clients: (0..self.malfunctioning).map(ClientId).collect(),
            probability: self.probability,
            ana_sigma: self.ana_sigma,
            sfa_constant: self.sfa_constant,
            corruption_fraction: self.corruption_fraction,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_fixed_regime() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.clients, 10);
        assert_eq!(cfg.rounds, 12);
        assert_eq!(cfg.regime, Regime::Fixed);
        assert_eq!(cfg.seeds, (0..10).collect::<Vec<u64>>());
        assert_eq!(cfg.attack, AttackKind::None);
        assert_eq!(cfg.malfunctioning, 0);
        assert!(cfg.attack_spec().unwrap().is_none());
    }

    #[test]
    fn dynamic_regime_presets_apply() {
        let raw = RawConfig {
            regime: Some("dynamic".into()),
            attack: Some("sfa".into()),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(raw).unwrap();
        assert_eq!(cfg.malfunctioning, 4);
        assert_eq!(cfg.probability, 0.75);
        assert_eq!(cfg.seeds.len(), 5);
        let spec = cfg.attack_spec().unwrap().unwrap();
        assert_eq!(spec.clients.len(), 4);
        assert_eq!(spec.probability, 0.75);
    }

    #[test]
    fn fixed_regime_designates_three_at_certainty() {
        let raw = RawConfig {
            attack: Some("ana".into()),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(raw).unwrap();
        assert_eq!(cfg.malfunctioning, 3);
        let spec = cfg.attack_spec().unwrap().unwrap();
        assert_eq!(spec.probability, 1.0);
    }

    #[test]
    fn fixed_regime_rejects_a_partial_probability() {
        let raw = RawConfig {
            attack: Some("sfa".into()),
            probability: Some(0.5),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(raw).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RawConfig::from_toml("sneaky_knob = 3\n").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("sneaky_knob"), "message: {message}");
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!("frobnicate".parse::<DefenseKind>().is_err());
        assert!("frobnicate".parse::<AttackKind>().is_err());
        assert!("frobnicate".parse::<Regime>().is_err());
    }

    #[test]
    fn file_round_trip_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "defense = \"asmr\"\nattack = \"sfa\"\nrounds = 4\nseeds = 2\nclients = 6\nmalfunctioning = 2\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.defense, DefenseKind::Asmr);
        assert_eq!(cfg.attack, AttackKind::Sfa);
        assert_eq!(cfg.rounds, 4);
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.clients, 6);
        assert_eq!(cfg.malfunctioning, 2);
    }

    #[test]
    fn missing_file_is_a_read_error() {
        let err = ExperimentConfig::from_file(Path::new("/no/such/config.toml")).unwrap_err();
        assert!(matches!(err, Error::ConfigRead { .. }));
        assert!(err.to_string().contains("/no/such/config.toml"));
    }

    #[test]
    fn validation_cross_checks_defense_and_population() {
        let raw = RawConfig {
            defense: Some("mkrum".into()),
            clients: Some(5),
            assumed_malicious: Some(3),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(raw).is_err());

        let raw = RawConfig {
            attack: Some("sfa".into()),
            malfunctioning: Some(11),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(raw).is_err());

        let raw = RawConfig {
            attack: Some("sfa".into()),
            malfunctioning: Some(0),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(raw).is_err());
    }

    #[test]
    fn config_echo_survives_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
