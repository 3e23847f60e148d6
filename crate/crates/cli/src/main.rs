use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use schmidt_mesh::config::ExperimentConfig;
use schmidt_mesh::csvio::state_from_csv;
use schmidt_mesh::report::{compare_reports, load_report};
use schmidt_mesh::runner::run_all;
use schmidt_mesh_core::linalg::{svd_oracle, DEFAULT_RANK_EPSILON};
use schmidt_mesh_core::state::{von_neumann_entropy, LogBase};

/// Simulator for bipartite self-configuring mesh networks that learn the
/// Schmidt decomposition of a pure two-photon state.
#[derive(Parser)]
#[command(name = "schmidt-mesh", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config and write reports plus artifacts.
    Run {
        /// TOML experiment configuration.
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for multi-seed fan-out.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diff two report.json files from the same source spec.
    Compare { a: PathBuf, b: PathBuf },
    /// Print the SVD oracle decomposition of a state matrix CSV.
    Oracle { state: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            jobs,
            out,
        } => {
            let mut config = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return Ok(ExitCode::from(2));
                }
            };
            if let Some(seed) = seed {
                config.seeds = vec![seed];
            }
            if let Some(out) = out {
                config.output_dir = out.display().to_string();
            }
            let out_dir = PathBuf::from(&config.output_dir);
            let outcome = run_all(&config, jobs, &out_dir)?;
            for (seed, path) in &outcome.reports {
                println!("seed {seed}: report at {}", path.display());
            }
            if outcome.all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("one or more configured assertions failed");
                Ok(ExitCode::from(1))
            }
        }
        Command::Compare { a, b } => {
            let ra = load_report(&a)?;
            let rb = load_report(&b)?;
            let summary = compare_reports(&ra, &rb)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { state } => {
            let text = std::fs::read_to_string(&state)?;
            let state = state_from_csv(&text)?;
            let svd = svd_oracle(state.matrix(), DEFAULT_RANK_EPSILON)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("rank: {}", svd.rank());
            println!("values:");
            for v in &svd.values {
                println!("  {v}");
            }
            println!(
                "entropy_bits: {}",
                von_neumann_entropy(&svd.values, LogBase::Two)
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
