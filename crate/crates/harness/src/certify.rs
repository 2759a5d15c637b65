//! Certification of a finished run from its `rounds.csv`.

use stackelberg_core::experiment::{
    certify_stackelberg, replay_profile, ExperimentConfig, RegretBaseline, RoundRecord,
    StackelbergCertificate,
};
use stackelberg_core::Error;

use crate::error::Result;
use crate::files::RoundRow;

/// The CSV does not carry `x^t`, but the inner loop is deterministic from a
/// fixed start, so the profile of the best round is recovered by rerunning
/// the logged number of iterations at the logged price.
pub fn certify_from_rows(
    rows: &[RoundRow],
    config: &ExperimentConfig,
    baseline: &RegretBaseline,
    epsilon: f64,
) -> Result<StackelbergCertificate> {
    let best = rows
        .iter()
        .fold(None, |best: Option<&RoundRow>, r| match best {
            Some(b) if b.realized_cost <= r.realized_cost => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::InvalidConfig("no rounds to certify".into()))?;
    let x = replay_profile(&config.game, &best.pi, best.inner_iterations, config.inner_step)?;
    let record = RoundRecord {
        t: best.t,
        pi: best.pi.clone(),
        x,
        realized_cost: best.realized_cost,
        oracle_cost: best.oracle_cost,
        inner_iterations: best.inner_iterations,
        inner_residual: best.inner_residual,
        instantaneous_regret: best.realized_cost - baseline.value,
        cumulative_regret: best.cumulative_regret,
        average_regret: best.average_regret,
    };
    Ok(certify_stackelberg(&[record], &config.game, baseline, epsilon)?)
}
