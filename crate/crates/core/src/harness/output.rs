//! Result files: one CSV row per (seed, round) and a JSON summary.
//!
//! Floats are written in shortest round-trip form, so identical runs produce
//! byte-identical files. Undefined rates serialize as empty CSV cells and
//! JSON nulls.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::ClientId;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{MetricsSummary, SeedRun};

/// Note embedded in every summary explaining the undefined-rate convention.
pub const UNDEFINED_RATE_RULE: &str = "tpr is null/empty for rounds with no \
malfunctioning client; fpr is null/empty for rounds with no benign client; \
means pool the defined values only";

/// One (seed, round) line of rounds.csv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    pub round: u64,
    pub defense: String,
    pub attack: String,
    pub regime: String,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub accuracy: f64,
    pub excluded_ids: String,
    pub truth_ids: String,
}

fn join_ids(ids: &[ClientId]) -> String {
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// Flattens seed runs into CSV rows, seeds outermost, rounds in order.
pub fn build_rows(config: &ExperimentConfig, runs: &[SeedRun]) -> Vec<CsvRow> {
    let defense = config.defense.to_string();
    let attack = config.attack.to_string();
    let regime = config.regime.to_string();
    runs.iter()
        .flat_map(|run| {
            let (defense, attack, regime) = (defense.clone(), attack.clone(), regime.clone());
            run.rounds.iter().map(move |r| CsvRow {
                seed: run.seed,
                round: r.round,
                defense: defense.clone(),
                attack: attack.clone(),
                regime: regime.clone(),
                tpr: r.tpr,
                fpr: r.fpr,
                accuracy: r.test_accuracy,
                excluded_ids: join_ids(&r.excluded),
                truth_ids: join_ids(&r.ground_truth),
            })
        })
        .collect()
}

pub fn write_rounds_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Attack strengths a run actually used, and whether calibration set them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackParameters {
    pub ana_sigma: f64,
    pub sfa_constant: f64,
    pub corruption_fraction: f64,
    pub calibrated: bool,
}

impl AttackParameters {
    pub fn from_config(config: &ExperimentConfig, calibrated: bool) -> Self {
        Self {
            ana_sigma: config.ana_sigma,
            sfa_constant: config.sfa_constant,
            corruption_fraction: config.corruption_fraction,
            calibrated,
        }
    }
}

/// Everything summary.json carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub attack_parameters: AttackParameters,
    pub metrics: MetricsSummary,
    pub undefined_rate_rule: String,
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
