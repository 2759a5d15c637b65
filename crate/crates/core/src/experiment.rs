//! The outer loop: announce a price, let the followers approximately
//! equilibrate, observe the realized cost, update the surrogate, repeat.
//!
//! Regret is measured against `min_pi J(pi, x*(pi))`, which is approximated
//! on a price grid with exact (oracle) equilibria by [`regret_baseline`].

use alloc::vec::Vec;

use rand::Rng;

use crate::equilibrium::{
    approx_ne, certify_epsilon_nash, ne_oracle, NeResult, StepSchedule, StoppingRule,
};
use crate::game::{leader_cost, GameParams, JointAllocation, PriceVector, RideHailGame};
use crate::gp::{fit_hyperparameters, FitOptions, GpState, HyperBounds, KernelKind, KernelSpec, ObservationScaling};
use crate::learner::{choose_next_price, minimize_on_box, AcquisitionConfig, BetaSchedule, PriceBox};
use crate::seed::{stream_rng, Stream};
use crate::{Error, Result};

/// Inner-loop stopping rule as it appears in a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InnerStop {
    MaxIters(usize),
    Residual { tol: f64, max_iters: usize },
    /// Stop within `eps` of the oracle equilibrium at the announced price.
    DistanceToOracle { eps: f64, max_iters: usize },
}

impl InnerStop {
    pub fn distance(eps: f64) -> Self {
        InnerStop::DistanceToOracle {
            eps,
            max_iters: 20_000_000,
        }
    }
}

#[cfg(feature = "serde")]
fn default_step() -> StepSchedule {
    StepSchedule::default()
}

#[cfg(feature = "serde")]
fn default_certificate_epsilon() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentConfig {
    pub game: GameParams,
    #[cfg_attr(feature = "serde", serde(rename = "T"))]
    pub rounds: usize,
    pub n_warm: usize,
    pub inner_stop: InnerStop,
    #[cfg_attr(feature = "serde", serde(default = "default_step"))]
    pub inner_step: StepSchedule,
    pub beta: BetaSchedule,
    pub acquisition: AcquisitionConfig,
    pub kernel_kind: KernelKind,
    /// Kernel used until (and unless) hyperparameters are refit.
    pub prior_kernel: KernelSpec,
    pub prior_noise_sd: f64,
    pub refit_after_warmup: bool,
    pub hyper_bounds: HyperBounds,
    pub hyper_starts: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub observation_scaling: ObservationScaling,
    pub seed: u64,
    pub regret_oracle_grid: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_certificate_epsilon"))]
    pub certificate_epsilon: f64,
}

impl ExperimentConfig {
    /// 25 rounds, 5 warm-up rounds, squared exponential kernel refit after
    /// warm-up, fixed width 0.2, followers stopped within `inner_eps` of
    /// equilibrium.
    pub fn reference(inner_eps: f64, seed: u64) -> Self {
        let game = GameParams::reference();
        let width = game.pi_max - game.pi_min;
        ExperimentConfig {
            prior_kernel: KernelSpec::squared_exponential(alloc::vec![0.2 * width; game.d], 0.1),
            game,
            rounds: 25,
            n_warm: 5,
            inner_stop: InnerStop::distance(inner_eps),
            inner_step: StepSchedule::default(),
            beta: BetaSchedule::Fixed(0.2),
            acquisition: AcquisitionConfig::default(),
            kernel_kind: KernelKind::SquaredExponential,
            prior_noise_sd: 1e-2,
            refit_after_warmup: true,
            hyper_bounds: HyperBounds::for_box_width(width),
            hyper_starts: 8,
            observation_scaling: ObservationScaling::Raw,
            seed,
            regret_oracle_grid: 200,
            certificate_epsilon: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        if self.n_warm > self.rounds {
            return Err(Error::InvalidConfig("need T >= n_warm".into()));
        }
        if self.regret_oracle_grid == 0 || self.hyper_starts == 0 {
            return Err(Error::InvalidConfig("grid sizes must be positive".into()));
        }
        if !(self.prior_noise_sd > 0.0) {
            return Err(Error::InvalidConfig("prior_noise_sd must be positive".into()));
        }
        if self.prior_kernel.kind != self.kernel_kind {
            return Err(Error::InvalidConfig("prior_kernel kind differs from kernel_kind".into()));
        }
        self.prior_kernel.validate(self.game.d)?;
        self.beta.validate()?;
        self.acquisition.validate()
    }

    pub fn price_box(&self) -> PriceBox {
        PriceBox::uniform(self.game.d, self.game.pi_min, self.game.pi_max)
    }
}

/// One outer-loop round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundRecord {
    pub t: usize,
    pub pi: PriceVector,
    /// Followers' profile; logged for diagnostics, never shown to the leader.
    pub x: JointAllocation,
    pub realized_cost: f64,
    pub oracle_cost: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    pub instantaneous_regret: f64,
    pub cumulative_regret: f64,
    pub average_regret: f64,
}

/// `min_pi J(pi, x*(pi))` and where it is attained.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegretBaseline {
    pub value: f64,
    pub argmin: PriceVector,
}

/// Leader cost at the oracle equilibrium for `pi`.
pub fn equilibrium_cost(game: &RideHailGame, pi: &PriceVector) -> Result<f64> {
    let ne = ne_oracle(game, pi)?;
    leader_cost(&ne.x_star, game.params())
}

/// Grid search for the best price at exact equilibrium, then compass-search
/// refinement inside the best grid cell.
pub fn regret_baseline(params: &GameParams, grid_points: usize) -> Result<RegretBaseline> {
    let game = RideHailGame::new(params.clone())?;
    let bounds = PriceBox::uniform(params.d, params.pi_min, params.pi_max);
    let mut failure: Option<Error> = None;
    let mut cost = |p: &[f64]| -> f64 {
        if failure.is_some() {
            return f64::INFINITY;
        }
        match equilibrium_cost(&game, &PriceVector::new(p.to_vec())) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        }
    };
    let (argmin, value, _) = minimize_on_box(&mut cost, &bounds, grid_points, 1, 1e-9);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RegretBaseline {
        value,
        argmin: PriceVector::new(argmin),
    })
}

fn inner_rule<'a>(stop: InnerStop, oracle: &'a JointAllocation) -> StoppingRule<'a> {
    match stop {
        InnerStop::MaxIters(k) => StoppingRule::MaxIters(k),
        InnerStop::Residual { tol, max_iters } => StoppingRule::Residual { tol, max_iters },
        InnerStop::DistanceToOracle { eps, max_iters } => StoppingRule::DistanceToOracle {
            eps,
            oracle,
            max_iters,
        },
    }
}

/// Followers' response to `pi` under `stop`. An exhausted iteration budget is
/// not an error here: the followers play whatever they reached.
pub fn follower_response(
    game: &RideHailGame,
    pi: &PriceVector,
    stop: InnerStop,
    step: StepSchedule,
    oracle: &JointAllocation,
) -> Result<NeResult> {
    match approx_ne(game, pi, inner_rule(stop, oracle), step) {
        Ok(r) => Ok(r),
        Err(Error::NotConverged(r)) => {
            log::warn!(
                "inner loop hit its budget after {} iterations (residual {:e})",
                r.iterations,
                r.residual
            );
            Ok(*r)
        }
        Err(e) => Err(e),
    }
}

/// Runs the full outer loop. Regret is accounted against `baseline`.
pub fn run_experiment(config: &ExperimentConfig, baseline: &RegretBaseline) -> Result<Vec<RoundRecord>> {
    config.validate()?;
    let game = RideHailGame::new(config.game.clone())?;
    let bounds = config.price_box();
    let mut warm_rng = stream_rng(config.seed, Stream::WarmupPrices);
    let mut hyper_rng = stream_rng(config.seed, Stream::HyperparameterStarts);
    let random_rounds = config.n_warm.max(1);

    let mut gp = GpState::new(config.prior_kernel.clone(), config.prior_noise_sd)
        .with_scaling(config.observation_scaling);
    let mut records: Vec<RoundRecord> = Vec::with_capacity(config.rounds);
    let mut cumulative = 0.0;

    for t in 1..=config.rounds {
        let pi = if t <= random_rounds {
            PriceVector::new(
                bounds
                    .lower
                    .iter()
                    .zip(&bounds.upper)
                    .map(|(lo, hi)| lo + (hi - lo) * warm_rng.random::<f64>())
                    .collect(),
            )
        } else {
            choose_next_price(&gp, &config.beta, &config.acquisition, gp.len(), &bounds)
                .map_err(|e| e.at_round(t))?
                .price
        };

        let oracle = ne_oracle(&game, &pi).map_err(|e| e.at_round(t))?;
        let response = follower_response(&game, &pi, config.inner_stop, config.inner_step, &oracle.x_star)
            .map_err(|e| e.at_round(t))?;
        let realized = leader_cost(&response.x_star, &config.game).map_err(|e| e.at_round(t))?;
        let oracle_cost = leader_cost(&oracle.x_star, &config.game).map_err(|e| e.at_round(t))?;

        let instantaneous = realized - baseline.value;
        cumulative += instantaneous;
        log::info!(
            "t={t} pi={:?} J={realized:.6e} inner_iters={} R/t={:.6}",
            pi.as_slice(),
            response.iterations,
            cumulative / t as f64
        );

        gp = gp.append(pi.clone(), realized).map_err(|e| e.at_round(t))?;
        records.push(RoundRecord {
            t,
            pi,
            x: response.x_star,
            realized_cost: realized,
            oracle_cost,
            inner_iterations: response.iterations,
            inner_residual: response.residual,
            instantaneous_regret: instantaneous,
            cumulative_regret: cumulative,
            average_regret: cumulative / t as f64,
        });

        if config.refit_after_warmup && t == config.n_warm && t >= 2 {
            let options = FitOptions {
                bounds: config.hyper_bounds,
                starts: config.hyper_starts,
                max_iters: 300,
                fallback_kernel: config.prior_kernel.clone(),
                fallback_noise_sd: config.prior_noise_sd,
            };
            let fit = fit_hyperparameters(
                gp.inputs(),
                &gp.scaled_observations(),
                config.kernel_kind,
                &options,
                &mut hyper_rng,
            )
            .map_err(|e| e.at_round(t))?;
            log::info!(
                "refit after warm-up: kernel {:?}, noise sd {:.3e}, log likelihood {:.4}",
                fit.kernel,
                fit.noise_sd,
                fit.log_likelihood
            );
            gp = gp
                .with_hyperparameters(fit.kernel, fit.noise_sd)
                .map_err(|e| e.at_round(t))?;
        }
    }
    Ok(records)
}

/// Outcome of [`certify_stackelberg`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StackelbergCertificate {
    /// Round with the lowest realized cost.
    pub t_star: usize,
    pub pi_star: PriceVector,
    /// `J(pi_t*, x_t*) - baseline`.
    pub leader_gap: f64,
    /// Smallest eps for which `x_t*` is an eps-Nash equilibrium at `pi_t*`.
    pub follower_gap: f64,
    pub epsilon_target: f64,
    pub certified: bool,
}

/// Picks the best round and checks it against `epsilon_target` on both levels.
pub fn certify_stackelberg(
    records: &[RoundRecord],
    params: &GameParams,
    baseline: &RegretBaseline,
    epsilon_target: f64,
) -> Result<StackelbergCertificate> {
    let best = best_round(records)
        .ok_or_else(|| Error::InvalidConfig("no rounds to certify".into()))?;
    let game = RideHailGame::new(params.clone())?;
    let leader_gap = best.realized_cost - baseline.value;
    let follower_gap = certify_epsilon_nash(&game, &best.x, &best.pi)?;
    Ok(StackelbergCertificate {
        t_star: best.t,
        pi_star: best.pi.clone(),
        leader_gap,
        follower_gap,
        epsilon_target,
        certified: leader_gap.max(follower_gap) <= epsilon_target,
    })
}

/// Round with the smallest realized cost (earliest on ties).
pub fn best_round(records: &[RoundRecord]) -> Option<&RoundRecord> {
    records.iter().fold(None, |best: Option<&RoundRecord>, r| match best {
        Some(b) if b.realized_cost <= r.realized_cost => Some(b),
        _ => Some(r),
    })
}

/// Replays the followers' inner loop for a logged round. The inner loop is
/// deterministic, so running the same number of iterations reproduces the
/// logged profile exactly.
pub fn replay_profile(
    params: &GameParams,
    pi: &PriceVector,
    iterations: usize,
    step: StepSchedule,
) -> Result<JointAllocation> {
    let game = RideHailGame::new(params.clone())?;
    Ok(approx_ne(&game, pi, StoppingRule::MaxIters(iterations), step)?.x_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(eps: f64, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::reference(eps, seed);
        c.rounds = 8;
        c.n_warm = 3;
        c.acquisition.grid_points_per_dim = 15;
        c.regret_oracle_grid = 15;
        c
    }

    #[test]
    fn warmup_only_run_uses_random_prices() {
        let mut c = quick(0.1, 3);
        c.rounds = 3;
        let base = RegretBaseline {
            value: 0.0,
            argmin: PriceVector::new(alloc::vec![1.0, 1.0]),
        };
        let recs = run_experiment(&c, &base).unwrap();
        assert_eq!(recs.len(), 3);
        // distinct random draws, strictly inside the box
        assert_ne!(recs[0].pi, recs[1].pi);
        assert!(recs.iter().all(|r| r.pi.within(&c.game)));
    }

    #[test]
    fn same_seed_same_records() {
        let c = quick(0.1, 11);
        let base = RegretBaseline {
            value: 0.0,
            argmin: PriceVector::new(alloc::vec![1.0, 1.0]),
        };
        let a = run_experiment(&c, &base).unwrap();
        let b = run_experiment(&c, &base).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_inconsistent_config() {
        let mut c = quick(0.1, 0);
        c.n_warm = c.rounds + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn best_round_prefers_earliest_tie() {
        let r = |t, cost| RoundRecord {
            t,
            pi: PriceVector::new(alloc::vec![1.0]),
            x: JointAllocation::zeros(1, 1),
            realized_cost: cost,
            oracle_cost: cost,
            inner_iterations: 0,
            inner_residual: 0.0,
            instantaneous_regret: cost,
            cumulative_regret: 0.0,
            average_regret: 0.0,
        };
        let recs = [r(1, 0.3), r(2, 0.1), r(3, 0.1)];
        assert_eq!(best_round(&recs).unwrap().t, 2);
        assert!(best_round(&[]).is_none());
    }
}
