//! Experiment harness: seeded multi-run execution with CSV learning
//! curves, the oracle verification table, and dictionary snapshot export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rnpe::config::ExperimentConfig;
use rnpe::control::RunOutcome;
use rnpe::evaluator::Snapshot;
use rnpe::report::run_experiment;
use rnpe::verification;

/// Environment variable capping the number of parallel seed workers.
const MAX_WORKERS_VAR: &str = "RNPE_MAX_WORKERS";

#[derive(Parser)]
#[command(
    name = "rnpe",
    about = "Online kernel-based least-squares policy evaluation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file; one CSV per seed
    /// plus an aggregate CSV land in the configured output directory.
    Run {
        /// Path to the key = value config file.
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle cross-check suite and print one row per criterion.
    Verify,
    /// Write the dictionary stored in a snapshot as CSV.
    ExportDict {
        /// Path to a snapshot JSON file produced by `run`.
        snapshot: PathBuf,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => cmd_run(&config, output),
        Command::Verify => cmd_verify(),
        Command::ExportDict { snapshot, output } => cmd_export_dict(&snapshot, output),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn max_workers(n_seeds: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(MAX_WORKERS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(available);
    cap.clamp(1, n_seeds.max(1))
}

fn cmd_run(config_path: &Path, output: Option<PathBuf>) -> Result<ExitCode, rnpe::Error> {
    let text = std::fs::read_to_string(config_path)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(dir) = output {
        cfg.output = dir.to_string_lossy().into_owned();
    }
    let out_dir = PathBuf::from(&cfg.output);
    std::fs::create_dir_all(&out_dir)?;

    let workers = max_workers(cfg.seeds.len());
    let artifacts = run_experiment(&cfg, workers)?;

    for (seed, csv) in &artifacts.per_seed {
        let path = out_dir.join(format!("seed_{seed}.csv"));
        std::fs::write(&path, csv)?;
        println!("wrote {}", path.display());
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate_path, &artifacts.aggregate)?;
    println!("wrote {}", aggregate_path.display());

    if cfg.save_snapshot {
        for (seed, outcome) in cfg.seeds.iter().zip(&artifacts.outcomes) {
            if let Some(path) = write_snapshot(&out_dir, *seed, outcome)? {
                println!("wrote {}", path.display());
            }
        }
    }

    let episodes: usize = artifacts.outcomes.iter().map(|o| o.log.episodes.len()).sum();
    println!(
        "{} seeds, {} transitions each, {} episodes total",
        cfg.seeds.len(),
        cfg.max_transitions,
        episodes
    );
    Ok(ExitCode::SUCCESS)
}

fn write_snapshot(
    out_dir: &Path,
    seed: u64,
    outcome: &RunOutcome,
) -> Result<Option<PathBuf>, rnpe::Error> {
    let (Some(dict), Some(eval)) =
        (outcome.learner.dictionary(), outcome.learner.evaluator())
    else {
        return Ok(None);
    };
    let snap = Snapshot::capture(eval, dict, outcome.learner.kernel());
    let path = out_dir.join(format!("seed_{seed}_snapshot.json"));
    std::fs::write(&path, snap.to_json())?;
    Ok(Some(path))
}

fn cmd_verify() -> Result<ExitCode, rnpe::Error> {
    let results = verification::run_all();
    for result in &results {
        println!("{result}");
    }
    if verification::all_passed(&results) {
        println!("all {} criteria passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = results.iter().filter(|r| !r.passed).count();
        println!("{failed} of {} criteria failed", results.len());
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_export_dict(snapshot_path: &Path, output: Option<PathBuf>) -> Result<ExitCode, rnpe::Error> {
    let text = std::fs::read_to_string(snapshot_path)?;
    let snap = Snapshot::from_json(&text)?;
    let dict = snap.restore_dictionary()?;
    let csv = dict.to_csv();
    match output {
        Some(path) => {
            std::fs::write(&path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}
