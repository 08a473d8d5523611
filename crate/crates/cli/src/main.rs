//! Command-line runner: configures an experiment from a file and flags,
//! optionally calibrates attack strengths, sweeps the seeds, and writes
//! rounds.csv plus summary.json.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robustfl::harness::{
    self, AttackKind, AttackParameters, ExperimentConfig, RawConfig, SweepOutcome,
};
use robustfl::Result;

#[derive(Parser)]
#[command(
    name = "robustfl",
    version,
    about = "Federated aggregation experiments with malfunction detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and report pooled metrics.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file with flat `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Aggregation defense: none|asmr|mkrum|dnc|cfl.
    #[arg(long)]
    defense: Option<String>,

    /// Malfunction mechanism: none|ana|sfa|unreliable|combined.
    #[arg(long)]
    attack: Option<String>,

    /// Schedule regime: fixed|dynamic.
    #[arg(long)]
    regime: Option<String>,

    /// Federated rounds per seed.
    #[arg(long)]
    rounds: Option<u64>,

    /// Number of master seeds to sweep.
    #[arg(long)]
    seeds: Option<usize>,

    /// Population size.
    #[arg(long)]
    clients: Option<usize>,

    /// Malfunctioning-client bound assumed by mkrum and dnc.
    #[arg(long)]
    f: Option<usize>,

    /// Directory for rounds.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Fit noise sigma and corruption fraction before the sweep.
    #[arg(long)]
    calibrate: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    if let Some(v) = &args.defense {
        raw.defense = Some(v.clone());
    }
    if let Some(v) = &args.attack {
        raw.attack = Some(v.clone());
    }
    if let Some(v) = &args.regime {
        raw.regime = Some(v.clone());
    }
    if let Some(v) = args.rounds {
        raw.rounds = Some(v);
    }
    if let Some(v) = args.seeds {
        raw.seeds = Some(v);
    }
    if let Some(v) = args.clients {
        raw.clients = Some(v);
    }
    if let Some(v) = args.f {
        raw.assumed_malicious = Some(v);
    }
    ExperimentConfig::resolve(raw)
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = resolve_config(&args)?;

    let mut calibrated = false;
    if args.calibrate {
        if matches!(config.attack, AttackKind::Ana | AttackKind::Combined) {
            let fit = harness::calibrate_ana_sigma(&config)?;
            println!(
                "calibrated ana_sigma = {} (undefended accuracy {:.4} -> {:.4}, relative drop {:.3})",
                fit.sigma, fit.baseline_accuracy, fit.attacked_accuracy, fit.relative_drop
            );
            config.ana_sigma = fit.sigma;
            calibrated = true;
        }
        if matches!(config.attack, AttackKind::Unreliable | AttackKind::Combined) {
            let fit = harness::calibrate_corruption_fraction(&config)?;
            println!(
                "calibrated corruption_fraction = {:.2} (solo accuracy {:.4} -> {:.4})",
                fit.fraction, fit.clean_accuracy, fit.corrupted_accuracy
            );
            config.corruption_fraction = fit.fraction;
            calibrated = true;
        }
        if !calibrated {
            log::warn!(
                "--calibrate has no effect for attack '{}'; only noise and label corruption are calibrated",
                config.attack
            );
        }
    }

    let outcome = harness::run_sweep(&config)?;
    report(&config, &outcome);

    if let Some(out_dir) = &args.out {
        let params = AttackParameters::from_config(&config, calibrated);
        let (csv_path, json_path) = harness::write_outputs(out_dir, &config, &outcome, params)?;
        println!("wrote {}", csv_path.display());
        println!("wrote {}", json_path.display());
    }
    Ok(())
}

fn rate(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".into(),
    }
}

fn report(config: &ExperimentConfig, outcome: &SweepOutcome) {
    println!(
        "defense={} attack={} regime={} clients={} rounds={} seeds={}",
        config.defense,
        config.attack,
        config.regime,
        config.clients,
        config.rounds,
        config.seeds.len()
    );
    let summary = &outcome.summary;
    println!(
        "mean_tpr={} mean_fpr={} mean_final_accuracy={:.4}",
        rate(summary.mean_tpr),
        rate(summary.mean_fpr),
        summary.mean_final_accuracy
    );
    for seed in &summary.per_seed {
        println!(
            "  seed {}: tpr={} fpr={} final_accuracy={:.4}",
            seed.seed,
            rate(seed.mean_tpr),
            rate(seed.mean_fpr),
            seed.final_accuracy
        );
    }
}
