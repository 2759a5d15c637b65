//! Single runs and the baseline cache they share.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use stackelberg_core::experiment::{
    certify_stackelberg, regret_baseline, run_experiment, ExperimentConfig, RegretBaseline,
    RoundRecord,
};
use stackelberg_core::GameParams;

use crate::error::Result;
use crate::files::Summary;

/// Regret baselines keyed by a hash of the game parameters and grid size.
/// Computing one takes tens of thousands of equilibrium solves, and every
/// run of a sweep shares the same game.
#[derive(Debug, Default)]
pub struct BaselineCache {
    entries: HashMap<u64, RegretBaseline>,
}

pub fn params_key(params: &GameParams, grid_points: usize) -> u64 {
    let mut h = DefaultHasher::new();
    // serde_json writes shortest round-trip floats, so equal params give equal text
    serde_json::to_string(params)
        .expect("GameParams serializes")
        .hash(&mut h);
    grid_points.hash(&mut h);
    h.finish()
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_compute(&mut self, params: &GameParams, grid_points: usize) -> Result<RegretBaseline> {
        let key = params_key(params, grid_points);
        if let Some(b) = self.entries.get(&key) {
            return Ok(b.clone());
        }
        log::info!("computing regret baseline on a {grid_points}-point grid");
        let b = regret_baseline(params, grid_points)?;
        log::info!("baseline {:.3e} at {:?}", b.value, b.argmin.as_slice());
        self.entries.insert(key, b.clone());
        Ok(b)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub baseline: RegretBaseline,
    pub summary: Summary,
}

/// Runs one experiment and certifies its best round at the configured
/// `certificate_epsilon`.
pub fn run_one(config: &ExperimentConfig, cache: &mut BaselineCache) -> Result<RunOutput> {
    config.validate()?;
    let baseline = cache.get_or_compute(&config.game, config.regret_oracle_grid)?;
    let records = run_experiment(config, &baseline)?;
    let certificate = if records.is_empty() {
        None
    } else {
        Some(certify_stackelberg(
            &records,
            &config.game,
            &baseline,
            config.certificate_epsilon,
        )?)
    };
    let summary = Summary::new(&records, &baseline, certificate);
    Ok(RunOutput {
        records,
        baseline,
        summary,
    })
}
