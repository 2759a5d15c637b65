//! Grids of runs over inner-loop tolerances and seeds.
//!
//! Layout under the output directory:
//!
//! ```text
//! eps_<tol>/seed_<s>/{rounds.csv, summary.json, config.json}
//! rounds_merged.csv      inner_tol,seed,<rounds.csv columns>
//! sweep_summary.json     one ToleranceStats per tolerance
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stackelberg_core::experiment::{ExperimentConfig, InnerStop};

use crate::error::{io_err, HarnessError, Result};
use crate::files::{csv_writer, emit_outputs, float, round_fields, rounds_header};
use crate::run::{run_one, BaselineCache, RunOutput};

/// `config` with its inner-loop tolerance replaced by `tol`.
pub fn with_inner_tol(config: &ExperimentConfig, tol: f64) -> ExperimentConfig {
    let mut c = config.clone();
    c.inner_stop = match config.inner_stop {
        InnerStop::DistanceToOracle { max_iters, .. } => InnerStop::DistanceToOracle { eps: tol, max_iters },
        InnerStop::Residual { max_iters, .. } => InnerStop::Residual { tol, max_iters },
        InnerStop::MaxIters(_) => InnerStop::distance(tol),
    };
    c
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub inner_tol: f64,
    pub seed: u64,
    pub output: RunOutput,
}

/// Runs every `(tol, seed)` pair. With `out`, each run's files go to their
/// own directory and the merged table and per-tolerance statistics are
/// written alongside.
pub fn run_sweep(
    base: &ExperimentConfig,
    tolerances: &[f64],
    seeds: &[u64],
    out: Option<&Path>,
    cache: &mut BaselineCache,
) -> Result<Vec<SweepRun>> {
    let mut runs = Vec::with_capacity(tolerances.len() * seeds.len());
    for &tol in tolerances {
        for &seed in seeds {
            let mut config = with_inner_tol(base, tol);
            config.seed = seed;
            log::info!("run inner_tol={tol} seed={seed}");
            let output = run_one(&config, cache)?;
            if let Some(dir) = out {
                let run_dir = dir.join(format!("eps_{tol}")).join(format!("seed_{seed}"));
                emit_outputs(&run_dir, &config, &output.records, &output.summary)?;
            }
            runs.push(SweepRun {
                inner_tol: tol,
                seed,
                output,
            });
        }
    }
    if let Some(dir) = out {
        write_merged(&dir.join("rounds_merged.csv"), base.game.d, &runs)?;
        let stats: Vec<ToleranceStats> = tolerances
            .iter()
            .filter_map(|&tol| ToleranceStats::collect(tol, &runs))
            .collect();
        let path = dir.join("sweep_summary.json");
        let text = serde_json::to_string_pretty(&stats).map_err(|source| HarnessError::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    Ok(runs)
}

fn write_merged(path: &Path, d: usize, runs: &[SweepRun]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let csv_err = |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv_writer(std::io::BufWriter::new(file));
    let mut header = vec!["inner_tol".to_string(), "seed".to_string()];
    header.extend(rounds_header(d));
    w.write_record(&header).map_err(csv_err)?;
    for run in runs {
        for r in &run.output.records {
            let mut row = vec![float(run.inner_tol), run.seed.to_string()];
            row.extend(round_fields(r));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (`n - 1` denominator).
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Seed statistics for one inner tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceStats {
    pub inner_tol: f64,
    pub runs: usize,
    pub best_costs: Vec<f64>,
    pub median_best_cost: f64,
    pub mean_best_cost: f64,
    pub sd_best_cost: f64,
    /// Per coordinate, over seeds.
    pub median_best_prices: Vec<f64>,
    pub median_final_avg_regret: f64,
    pub mean_final_avg_regret: f64,
    /// Mean of `R^t / t` at `t = 10`, or `None` if runs are shorter.
    pub mean_avg_regret_at_10: Option<f64>,
    pub certified: usize,
}

impl ToleranceStats {
    /// `None` if no run with this tolerance has any rounds.
    pub fn collect(inner_tol: f64, runs: &[SweepRun]) -> Option<Self> {
        let runs: Vec<&SweepRun> = runs
            .iter()
            .filter(|r| r.inner_tol == inner_tol && !r.output.records.is_empty())
            .collect();
        if runs.is_empty() {
            return None;
        }
        let best_costs: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.output.summary.best_realized_cost)
            .collect();
        let d = runs[0].output.records[0].pi.len();
        let median_best_prices = (0..d)
            .map(|m| {
                let col: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.output.summary.best_prices.as_ref().map(|p| p.0[m]))
                    .collect();
                median(&col).unwrap_or(f64::NAN)
            })
            .collect();
        let finals: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.output.summary.final_average_regret)
            .collect();
        let at_10: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.output.records.get(9).map(|rec| rec.average_regret))
            .collect();
        Some(ToleranceStats {
            inner_tol,
            runs: runs.len(),
            median_best_cost: median(&best_costs)?,
            mean_best_cost: mean(&best_costs)?,
            sd_best_cost: std_dev(&best_costs)?,
            best_costs,
            median_best_prices,
            median_final_avg_regret: median(&finals)?,
            mean_final_avg_regret: mean(&finals)?,
            mean_avg_regret_at_10: if at_10.len() == runs.len() { mean(&at_10) } else { None },
            certified: runs
                .iter()
                .filter(|r| r.output.summary.certificate.as_ref().is_some_and(|c| c.certified))
                .count(),
        })
    }
}
