use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use stackelberg_core::experiment::ExperimentConfig;
use stackelberg_harness::certify::certify_from_rows;
use stackelberg_harness::files::{emit_outputs, load_config, read_rounds, save_config};
use stackelberg_harness::sweep::{run_sweep, ToleranceStats};
use stackelberg_harness::{logging, run_one, BaselineCache};

/// Learning-based pricing for a ride-hailing market: the leader learns
/// prices from realized costs while fleets play an approximate equilibrium.
#[derive(Parser)]
#[command(name = "stackelberg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.json, config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every inner tolerance against seeds `seed..seed + seeds`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-6,0.1,0.3,0.5")]
        inner_tol: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the regret baseline and its argmin.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Certify the best round of a finished run.
    Certify {
        #[arg(long)]
        rounds: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Write the reference configuration.
    ReferenceConfig {
        #[arg(long, default_value_t = 1e-6)]
        inner_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    logging::init();
    let cli = Cli::parse();
    let mut cache = BaselineCache::new();
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let run = run_one(&cfg, &mut cache)?;
            emit_outputs(&out, &cfg, &run.records, &run.summary)?;
            let s = &run.summary;
            if let (Some(t), Some(p), Some(j)) = (s.best_round, &s.best_prices, s.best_realized_cost) {
                println!("best round {t}: pi = {:?}, J = {j:.6e}", p.as_slice());
            }
            if let Some(r) = s.final_average_regret {
                println!("R^T/T = {r:.6e}");
            }
        }
        Command::Sweep {
            config,
            inner_tol,
            seeds,
            out,
        } => {
            if inner_tol.is_empty() || seeds == 0 {
                bail!("need at least one tolerance and one seed");
            }
            let cfg = load_config(&config)?;
            let seeds: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let runs = run_sweep(&cfg, &inner_tol, &seeds, Some(&out), &mut cache)?;
            println!("inner_tol,median_best_J,median_avg_regret,certified");
            for stats in inner_tol.iter().filter_map(|&tol| ToleranceStats::collect(tol, &runs)) {
                println!(
                    "{},{:.6e},{:.6e},{}/{}",
                    stats.inner_tol,
                    stats.median_best_cost,
                    stats.median_final_avg_regret,
                    stats.certified,
                    stats.runs
                );
            }
        }
        Command::Baseline { config } => {
            let cfg = load_config(&config)?;
            let b = cache.get_or_compute(&cfg.game, cfg.regret_oracle_grid)?;
            println!("baseline {:.16e}", b.value);
            println!("argmin {:?}", b.argmin.as_slice());
        }
        Command::Certify {
            rounds,
            config,
            epsilon,
        } => {
            let cfg = load_config(&config)?;
            let rows = read_rounds(&rounds)?;
            let baseline = cache.get_or_compute(&cfg.game, cfg.regret_oracle_grid)?;
            let eps = epsilon.unwrap_or(cfg.certificate_epsilon);
            let cert = certify_from_rows(&rows, &cfg, &baseline, eps)
                .with_context(|| format!("certifying {}", rounds.display()))?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            if !cert.certified {
                std::process::exit(1);
            }
        }
        Command::ReferenceConfig { inner_tol, seed, out } => {
            save_config(&out, &ExperimentConfig::reference(inner_tol, seed))?;
        }
    }
    Ok(())
}
