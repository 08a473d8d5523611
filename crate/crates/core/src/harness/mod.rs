//! Experiment harness: configuration, seed sweeps, metrics, calibration, and
//! result files.

pub mod calibrate;
pub mod config;
pub mod metrics;
pub mod output;

use std::path::{Path, PathBuf};

pub use calibrate::{
    calibrate_ana_sigma, calibrate_corruption_fraction, CorruptionCalibration, NoiseCalibration,
};
pub use config::{AttackKind, DefenseKind, ExperimentConfig, RawConfig, Regime};
pub use metrics::{round_metrics, summarize, MetricsSummary, RoundMetrics, SeedRun, SeedSummary};
pub use output::{
    build_rows, read_rounds_csv, read_summary_json, write_rounds_csv, write_summary_json,
    AttackParameters, CsvRow, RunSummary, UNDEFINED_RATE_RULE,
};

use crate::error::{Error, Result};
use crate::fedsim::{RoundRecord, Simulation};

/// Runs one full simulation for a single master seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<RoundRecord>> {
    let mut simulation = Simulation::new(
        &config.task_config(),
        config.clients,
        config.defense(),
        config.attack_spec()?,
        config.train_config(),
        seed,
    )?;
    simulation.run(config.rounds)
}

/// Results of sweeping a config over all its seeds.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub runs: Vec<SeedRun>,
    pub summary: MetricsSummary,
}

/// Runs the config once per seed, sequentially, and pools the metrics.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let records = run_seed(config, seed)?;
        runs.push(SeedRun {
            seed,
            rounds: records.iter().map(round_metrics).collect(),
        });
    }
    let summary = summarize(&runs);
    Ok(SweepOutcome { runs, summary })
}

/// Writes rounds.csv and summary.json into `out_dir`, creating it if needed.
pub fn write_outputs(
    out_dir: &Path,
    config: &ExperimentConfig,
    outcome: &SweepOutcome,
    attack_parameters: AttackParameters,
) -> Result<(PathBuf, PathBuf)> {
    let named = |path: &Path| {
        let path = path.display().to_string();
        move |e: Error| Error::OutputWrite {
            path,
            message: e.to_string(),
        }
    };
    std::fs::create_dir_all(out_dir)
        .map_err(Error::from)
        .map_err(named(out_dir))?;
    let csv_path = out_dir.join("rounds.csv");
    let json_path = out_dir.join("summary.json");
    write_rounds_csv(&csv_path, &build_rows(config, &outcome.runs)).map_err(named(&csv_path))?;
    let summary = RunSummary {
        config: config.clone(),
        attack_parameters,
        metrics: outcome.summary.clone(),
        undefined_rate_rule: UNDEFINED_RATE_RULE.to_string(),
    };
    write_summary_json(&json_path, &summary).map_err(named(&json_path))?;
    Ok((csv_path, json_path))
}
