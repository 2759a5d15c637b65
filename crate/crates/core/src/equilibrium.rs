//! Nash equilibrium computation for monotone games.
//!
//! The followers' inner loop is simultaneous projected pseudogradient descent
//! with a `gamma0 / (k + k0)` step schedule ([`approx_ne`]). For regret
//! evaluation and certification we also need the equilibrium to high
//! precision: [`ne_oracle`] runs extragradient steps with a locally adapted
//! step size on the same projected map, and [`best_response_iteration`]
//! gives an independent route through sequential best responses.

use alloc::boxed::Box;
use alloc::vec;

use crate::game::{FleetAllocation, JointAllocation, PriceVector};
use crate::{Error, Result};

/// What the solvers need from a lower-level game.
///
/// `pseudogradient` must be monotone on the feasible set for the solvers'
/// guarantees to hold; this is not checked at runtime.
pub trait Game {
    fn followers(&self) -> usize;

    fn dim(&self) -> usize;

    /// Stacked `v_i = -grad_{x_i} U_i` into `out` (length `N * d`).
    fn pseudogradient(&self, x: &JointAllocation, pi: &PriceVector, out: &mut [f64]);

    /// Block `i` of the pseudogradient.
    fn block_gradient(&self, i: usize, x: &JointAllocation, pi: &PriceVector, out: &mut [f64]) {
        let d = self.dim();
        let mut full = vec![0.0; self.followers() * d];
        self.pseudogradient(x, pi, &mut full);
        out.copy_from_slice(&full[i * d..(i + 1) * d]);
    }

    /// Euclidean projection of `y` onto follower `i`'s feasible set.
    fn project(&self, i: usize, y: &[f64], out: &mut [f64]);

    fn utility(&self, i: usize, x: &JointAllocation, pi: &PriceVector) -> f64;

    fn initial_point(&self) -> JointAllocation;
}

/// Step size `gamma0 / (k + k0)` at iteration `k` (zero-based).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSchedule {
    pub gamma0: f64,
    pub k0: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            gamma0: 1.0,
            k0: 10.0,
        }
    }
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        self.gamma0 / (k as f64 + self.k0)
    }
}

/// When the inner loop stops.
#[derive(Debug, Clone, Copy)]
pub enum StoppingRule<'a> {
    /// Exactly `K` iterations.
    MaxIters(usize),
    /// Natural residual at most `tol`.
    Residual { tol: f64, max_iters: usize },
    /// Within `eps` (Euclidean) of a precomputed equilibrium.
    DistanceToOracle {
        eps: f64,
        oracle: &'a JointAllocation,
        max_iters: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeResult {
    pub x_star: JointAllocation,
    pub iterations: usize,
    /// Natural residual `||x - P(x - v(x))||`.
    pub residual: f64,
    pub converged: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// `out = P(x - step * g)`, blockwise.
fn projected_step<G: Game + ?Sized>(
    game: &G,
    x: &[f64],
    g: &[f64],
    step: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let d = game.dim();
    for i in 0..game.followers() {
        let r = i * d..(i + 1) * d;
        for ((s, &xv), &gv) in scratch.iter_mut().zip(&x[r.clone()]).zip(&g[r.clone()]) {
            *s = xv - step * gv;
        }
        game.project(i, scratch, &mut out[r]);
    }
}

fn residual_with_gradient<G: Game + ?Sized>(game: &G, x: &JointAllocation, g: &[f64]) -> f64 {
    let d = game.dim();
    let mut p = vec![0.0; x.as_slice().len()];
    let mut scratch = vec![0.0; d];
    projected_step(game, x.as_slice(), g, 1.0, &mut p, &mut scratch);
    dist(x.as_slice(), &p)
}

/// Natural residual `||x - P(x - v(x; pi))||`; zero exactly at a Nash equilibrium.
pub fn ne_residual<G: Game + ?Sized>(game: &G, x: &JointAllocation, pi: &PriceVector) -> f64 {
    let mut g = vec![0.0; x.as_slice().len()];
    game.pseudogradient(x, pi, &mut g);
    residual_with_gradient(game, x, &g)
}

/// Projected pseudogradient descent from the game's initial point.
///
/// Returns [`Error::NotConverged`] carrying the last iterate when the budget
/// of a `Residual` or `DistanceToOracle` rule runs out.
pub fn approx_ne<G: Game + ?Sized>(
    game: &G,
    pi: &PriceVector,
    stop: StoppingRule<'_>,
    schedule: StepSchedule,
) -> Result<NeResult> {
    let d = game.dim();
    let mut x = game.initial_point();
    let len = x.as_slice().len();
    let mut g = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut scratch = vec![0.0; d];
    game.pseudogradient(&x, pi, &mut g);

    let max_iters = match stop {
        StoppingRule::MaxIters(k) => k,
        StoppingRule::Residual { max_iters, .. } => max_iters,
        StoppingRule::DistanceToOracle { max_iters, .. } => max_iters,
    };

    if g.iter().all(|&v| v == 0.0) {
        return Ok(NeResult {
            x_star: x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }

    let mut k = 0;
    let satisfied = loop {
        let done = match stop {
            StoppingRule::MaxIters(kmax) => k >= kmax,
            StoppingRule::Residual { tol, .. } => residual_with_gradient(game, &x, &g) <= tol,
            StoppingRule::DistanceToOracle { eps, oracle, .. } => x.distance(oracle) <= eps,
        };
        if done {
            break true;
        }
        if k >= max_iters {
            break false;
        }
        projected_step(game, x.as_slice(), &g, schedule.step(k), &mut next, &mut scratch);
        x.as_mut_slice().copy_from_slice(&next);
        game.pseudogradient(&x, pi, &mut g);
        k += 1;
    };

    let result = NeResult {
        residual: residual_with_gradient(game, &x, &g),
        x_star: x,
        iterations: k,
        converged: satisfied,
    };
    if satisfied {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}

/// Settings for [`ne_oracle_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            tol: 1e-10,
            max_iters: 1_000_000,
        }
    }
}

/// High-precision equilibrium: residual at most `1e-10`.
pub fn ne_oracle<G: Game + ?Sized>(game: &G, pi: &PriceVector) -> Result<NeResult> {
    ne_oracle_with(game, pi, OracleSettings::default())
}

/// Extragradient on the projected pseudogradient map.
///
/// The step is halved until `step * ||v(y) - v(x)|| <= 0.9 ||y - x||` at the
/// extrapolated point `y`, then allowed to grow again by 20% per iteration.
pub fn ne_oracle_with<G: Game + ?Sized>(
    game: &G,
    pi: &PriceVector,
    settings: OracleSettings,
) -> Result<NeResult> {
    const THETA: f64 = 0.9;
    const MIN_STEP: f64 = 1e-14;
    let d = game.dim();
    let mut x = game.initial_point();
    let len = x.as_slice().len();
    let mut g = vec![0.0; len];
    let mut y = JointAllocation::zeros(game.followers(), d);
    let mut gy = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut scratch = vec![0.0; d];
    let mut step = 1.0;
    let mut residual = f64::INFINITY;

    for it in 0..=settings.max_iters {
        game.pseudogradient(&x, pi, &mut g);
        residual = residual_with_gradient(game, &x, &g);
        if residual <= settings.tol {
            return Ok(NeResult {
                x_star: x,
                iterations: it,
                residual,
                converged: true,
            });
        }
        if it == settings.max_iters {
            break;
        }
        loop {
            projected_step(game, x.as_slice(), &g, step, y.as_mut_slice(), &mut scratch);
            game.pseudogradient(&y, pi, &mut gy);
            let moved = dist(x.as_slice(), y.as_slice());
            let gdiff = dist(&g, &gy);
            if step * gdiff <= THETA * moved || step <= MIN_STEP {
                break;
            }
            step *= 0.5;
        }
        projected_step(game, x.as_slice(), &gy, step, &mut next, &mut scratch);
        x.as_mut_slice().copy_from_slice(&next);
        step = (step * 1.2).min(1e6);
    }
    Err(Error::OracleNotConverged {
        residual,
        tol: settings.tol,
    })
}

const BR_TOL: f64 = 1e-10;
const BR_MAX_ITERS: usize = 100_000;

/// Follower `i`'s best response to the other blocks of `x`.
///
/// Projected gradient ascent on the concave own-utility, warm-started at
/// `x_i`, with the step kept below the inverse local curvature of the own
/// gradient. Stops at own natural residual `1e-10`.
pub fn best_response<G: Game + ?Sized>(
    game: &G,
    i: usize,
    x: &JointAllocation,
    pi: &PriceVector,
) -> Result<FleetAllocation> {
    let d = game.dim();
    let mut work = x.clone();
    let mut g = vec![0.0; d];
    let mut gz = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut step = 1.0;
    let mut residual = f64::INFINITY;

    let project_from = |game: &G, base: &[f64], g: &[f64], step: f64, out: &mut [f64], s: &mut [f64]| {
        for ((sv, &b), &gv) in s.iter_mut().zip(base).zip(g) {
            *sv = b - step * gv;
        }
        game.project(i, s, out);
    };

    for _ in 0..BR_MAX_ITERS {
        game.block_gradient(i, &work, pi, &mut g);
        project_from(game, work.block(i), &g, 1.0, &mut z, &mut scratch);
        residual = dist(work.block(i), &z);
        if residual <= BR_TOL {
            return Ok(FleetAllocation(work.block(i).to_vec()));
        }
        let current = work.block(i).to_vec();
        loop {
            project_from(game, &current, &g, step, &mut z, &mut scratch);
            work.block_mut(i).copy_from_slice(&z);
            game.block_gradient(i, &work, pi, &mut gz);
            let moved = dist(&current, &z);
            if step * dist(&g, &gz) <= moved || step <= 1e-14 {
                break;
            }
            step *= 0.5;
        }
        step = (step * 2.0).min(1e6);
    }
    Err(Error::BestResponseNotConverged {
        follower: i,
        residual,
    })
}

/// Sequential (Gauss-Seidel) best-response dynamics from the initial point.
pub fn best_response_iteration<G: Game + ?Sized>(
    game: &G,
    pi: &PriceVector,
    tol: f64,
    max_sweeps: usize,
) -> Result<NeResult> {
    let mut x = game.initial_point();
    let mut residual = ne_residual(game, &x, pi);
    for sweep in 0..max_sweeps {
        if residual <= tol {
            return Ok(NeResult {
                x_star: x,
                iterations: sweep,
                residual,
                converged: true,
            });
        }
        for i in 0..game.followers() {
            let br = best_response(game, i, &x, pi)?;
            x.block_mut(i).copy_from_slice(&br.0);
        }
        residual = ne_residual(game, &x, pi);
    }
    if residual <= tol {
        return Ok(NeResult {
            x_star: x,
            iterations: max_sweeps,
            residual,
            converged: true,
        });
    }
    Err(Error::OracleNotConverged { residual, tol })
}

/// Smallest `eps >= 0` such that `x` is an eps-Nash equilibrium, up to the
/// best-response tolerance.
pub fn certify_epsilon_nash<G: Game + ?Sized>(
    game: &G,
    x: &JointAllocation,
    pi: &PriceVector,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..game.followers() {
        let br = best_response(game, i, x, pi)?;
        let mut deviated = x.clone();
        deviated.block_mut(i).copy_from_slice(&br.0);
        let gain = game.utility(i, &deviated, pi) - game.utility(i, x, pi);
        worst = worst.max(gain);
    }
    Ok(worst)
}

/// Projects every block of a stacked vector onto its feasible set.
pub fn project_joint<G: Game + ?Sized>(game: &G, y: &[f64]) -> JointAllocation {
    let d = game.dim();
    let mut out = JointAllocation::zeros(game.followers(), d);
    for i in 0..game.followers() {
        game.project(i, &y[i * d..(i + 1) * d], out.block_mut(i));
    }
    out
}
