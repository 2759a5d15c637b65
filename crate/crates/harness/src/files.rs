//! On-disk formats: JSON configs, `rounds.csv`, `summary.json`.
//!
//! Floats in the CSV are written with 17 significant digits so that every
//! value reloads to the same bits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stackelberg_core::experiment::{
    best_round, ExperimentConfig, RegretBaseline, RoundRecord, StackelbergCertificate,
};
use stackelberg_core::PriceVector;

use crate::error::{io_err, HarnessError, Result};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_owned(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

pub fn save_config(path: &Path, config: &ExperimentConfig) -> Result<()> {
    write_json(path, config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,pi_1..pi_d,J_realized,J_oracle,inner_iters,inner_residual,R_t,avg_regret`
pub fn rounds_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|m| format!("pi_{m}")));
    h.extend(
        ["J_realized", "J_oracle", "inner_iters", "inner_residual", "R_t", "avg_regret"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub(crate) fn round_fields(r: &RoundRecord) -> Vec<String> {
    let mut row = vec![r.t.to_string()];
    row.extend(r.pi.as_slice().iter().map(|&p| float(p)));
    row.push(float(r.realized_cost));
    row.push(float(r.oracle_cost));
    row.push(r.inner_iterations.to_string());
    row.push(float(r.inner_residual));
    row.push(float(r.cumulative_regret));
    row.push(float(r.average_regret));
    row
}

pub(crate) fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Writes the rounds table; `d` fixes the header when `records` is empty.
pub fn write_rounds<W: Write>(w: W, d: usize, records: &[RoundRecord]) -> std::result::Result<(), csv::Error> {
    let mut out = csv_writer(w);
    out.write_record(rounds_header(d))?;
    for r in records {
        out.write_record(round_fields(r))?;
    }
    out.flush()?;
    Ok(())
}

/// A row of `rounds.csv`. The follower profile is not stored; see
/// [`crate::certify::certify_from_rows`] for how it is recovered.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub t: usize,
    pub pi: PriceVector,
    pub realized_cost: f64,
    pub oracle_cost: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    pub cumulative_regret: f64,
    pub average_regret: f64,
}

pub fn read_rounds(path: &Path) -> Result<Vec<RoundRow>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_rounds(file, path)
}

pub fn parse_rounds<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<RoundRow>> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    };
    let format_err = |message: String| HarnessError::Format {
        path: path.to_owned(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let d = header.iter().filter(|h| h.starts_with("pi_")).count();
    let expected = rounds_header(d);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format_err(format!("unexpected header {:?}", header)));
    }

    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k)
                .ok_or_else(|| format_err(format!("row {}: missing column {}", line + 1, k)))
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?
                .parse::<f64>()
                .map_err(|e| format_err(format!("row {}, column {}: {e}", line + 1, expected[k])))
        };
        let int = |k: usize| -> Result<usize> {
            field(k)?
                .parse::<usize>()
                .map_err(|e| format_err(format!("row {}, column {}: {e}", line + 1, expected[k])))
        };
        let pi = (1..=d).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(RoundRow {
            t: int(0)?,
            pi: PriceVector(pi),
            realized_cost: num(d + 1)?,
            oracle_cost: num(d + 2)?,
            inner_iterations: int(d + 3)?,
            inner_residual: num(d + 4)?,
            cumulative_regret: num(d + 5)?,
            average_regret: num(d + 6)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best_round: Option<usize>,
    pub best_prices: Option<PriceVector>,
    pub best_realized_cost: Option<f64>,
    pub final_average_regret: Option<f64>,
    pub baseline: RegretBaseline,
    pub certificate: Option<StackelbergCertificate>,
}

impl Summary {
    pub fn new(
        records: &[RoundRecord],
        baseline: &RegretBaseline,
        certificate: Option<StackelbergCertificate>,
    ) -> Self {
        let best = best_round(records);
        Summary {
            best_round: best.map(|r| r.t),
            best_prices: best.map(|r| r.pi.clone()),
            best_realized_cost: best.map(|r| r.realized_cost),
            final_average_regret: records.last().map(|r| r.average_regret),
            baseline: baseline.clone(),
            certificate,
        }
    }
}

/// Writes `rounds.csv`, `summary.json` and `config.json` into `dir`.
pub fn emit_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    records: &[RoundRecord],
    summary: &Summary,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rounds = dir.join(ROUNDS_FILE);
    let file = fs::File::create(&rounds).map_err(io_err(&rounds))?;
    write_rounds(std::io::BufWriter::new(file), config.game.d, records).map_err(|source| {
        HarnessError::Csv {
            path: rounds.clone(),
            source,
        }
    })?;
    write_json(&dir.join(SUMMARY_FILE), summary)?;
    save_config(&dir.join(CONFIG_FILE), config)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: PathBuf::from(path),
        source,
    })
}
