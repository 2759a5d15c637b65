//! Leader side of the outer loop: confidence widths and the acquisition step.
//!
//! The next price minimizes the lower confidence bound
//!
//! ```text
//! lcb(pi) = mu(pi) - (beta_t + eps * sqrt(t) / sigma) * sd(pi)
//! ```
//!
//! over the price box. The minimization is a full grid scan followed by
//! compass-search refinement from the best few grid points.

use alloc::vec;
use alloc::vec::Vec;

use crate::game::PriceVector;
use crate::gp::GpState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BetaSchedule {
    Fixed(f64),
    /// `B + (2 L_J D / sigma^2) sqrt(2 (gamma_{t-1} + 1 + ln(2 / delta)))`, with
    /// `D` the diameter of the followers' joint feasible set and `gamma` the
    /// information gain of the data seen so far.
    Theoretical {
        rkhs_bound: f64,
        cost_lipschitz: f64,
        diameter: f64,
        delta: f64,
    },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Fixed(v) if v >= 0.0 && v.is_finite() => Ok(()),
            BetaSchedule::Theoretical {
                rkhs_bound,
                cost_lipschitz,
                diameter,
                delta,
            } if rkhs_bound > 0.0
                && cost_lipschitz > 0.0
                && diameter > 0.0
                && delta > 0.0
                && delta < 1.0 =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidConfig("invalid beta schedule".into())),
        }
    }
}

/// Confidence width for round `t`. `gp` holds the observations gathered
/// before round `t`.
pub fn beta(schedule: &BetaSchedule, _t: usize, gp: &GpState) -> Result<f64> {
    match *schedule {
        BetaSchedule::Fixed(v) => Ok(v),
        BetaSchedule::Theoretical {
            rkhs_bound,
            cost_lipschitz,
            diameter,
            delta,
        } => {
            let s2 = gp.kernel().signal_variance;
            if s2 > 1.0 {
                return Err(Error::KernelNotNormalized(s2));
            }
            let gamma = gp.greedy_info_gain()?;
            let sigma = gp.noise_sd();
            let width = libm::sqrt(2.0 * (gamma + 1.0 + libm::log(2.0 / delta)));
            Ok(rkhs_bound + 2.0 * cost_lipschitz * diameter / (sigma * sigma) * width)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcquisitionConfig {
    /// Extra exploration weight (the `eps` in the confidence width).
    pub epsilon: f64,
    pub grid_points_per_dim: usize,
    pub refine_starts: usize,
    pub refine_tol: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            epsilon: 0.0,
            grid_points_per_dim: 50,
            refine_starts: 5,
            refine_tol: 1e-6,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon >= 0.0 && self.grid_points_per_dim > 0 && self.refine_starts > 0 && self.refine_tol > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("invalid acquisition config".into()))
        }
    }
}

/// Axis-aligned price box.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PriceBox {
    pub fn uniform(d: usize, lo: f64, hi: f64) -> Self {
        PriceBox {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Grid coordinate `j` of `n` along axis `m`, endpoints included.
    pub fn grid_coord(&self, m: usize, j: usize, n: usize) -> f64 {
        if n <= 1 {
            return self.lower[m];
        }
        let (lo, hi) = (self.lower[m], self.upper[m]);
        if j + 1 == n {
            hi
        } else {
            lo + (hi - lo) * j as f64 / (n - 1) as f64
        }
    }
}

/// Lower confidence bound at `pi` after `t` observations.
pub fn surrogate_lcb(gp: &GpState, pi: &PriceVector, beta_t: f64, epsilon: f64, t: usize) -> f64 {
    let post = gp.posterior(pi);
    let width = beta_t + epsilon * libm::sqrt(t as f64) / gp.noise_sd();
    post.mean - width * post.sd()
}

/// Lexicographic `a < b` on coordinates.
fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// `(value, point)` ordering: lower value first, ties broken lexicographically.
fn better(v: f64, p: &[f64], best_v: f64, best_p: &[f64]) -> bool {
    v < best_v || (v == best_v && lex_less(p, best_p))
}

/// Outcome of one acquisition step.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub price: PriceVector,
    pub value: f64,
    /// Smallest surrogate value on the evaluation grid.
    pub grid_min: f64,
}

/// Minimizes `objective` over `bounds`: grid scan, then compass search from
/// the `starts` best grid points. Ties go to the lexicographically smallest point.
pub fn minimize_on_box<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    bounds: &PriceBox,
    points_per_dim: usize,
    starts: usize,
    tol: f64,
) -> (Vec<f64>, f64, f64) {
    let d = bounds.dim();
    let n = points_per_dim.max(1);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    // (value, point), kept sorted by `better`
    let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(starts + 1);
    'scan: loop {
        for m in 0..d {
            point[m] = bounds.grid_coord(m, idx[m], n);
        }
        let v = objective(&point);
        let pos = top
            .iter()
            .position(|(bv, bp)| better(v, &point, *bv, bp))
            .unwrap_or(top.len());
        if pos < starts {
            top.insert(pos, (v, point.clone()));
            top.truncate(starts);
        }
        // odometer, last axis fastest, so points come in lexicographic order
        let mut m = d;
        loop {
            if m == 0 {
                break 'scan;
            }
            m -= 1;
            idx[m] += 1;
            if idx[m] < n {
                break;
            }
            idx[m] = 0;
        }
    }
    let grid_min = top.first().map_or(f64::INFINITY, |t| t.0);
    let (mut best_v, mut best_p) = top.first().cloned().unwrap_or((f64::INFINITY, point.clone()));

    let spacing: Vec<f64> = (0..d)
        .map(|m| {
            if n > 1 {
                (bounds.upper[m] - bounds.lower[m]) / (n - 1) as f64
            } else {
                bounds.upper[m] - bounds.lower[m]
            }
        })
        .collect();
    for (start_v, start_p) in top {
        let (v, p) = compass_search(&mut objective, bounds, start_p, start_v, &spacing, tol);
        if better(v, &p, best_v, &best_p) {
            best_v = v;
            best_p = p;
        }
    }
    (best_p, best_v, grid_min)
}

fn compass_search<F: FnMut(&[f64]) -> f64>(
    objective: &mut F,
    bounds: &PriceBox,
    mut x: Vec<f64>,
    mut fx: f64,
    spacing: &[f64],
    tol: f64,
) -> (f64, Vec<f64>) {
    let d = x.len();
    let mut step: Vec<f64> = spacing.iter().map(|s| 0.5 * s).collect();
    let mut guard = 0;
    while step.iter().any(|s| *s > tol) && guard < 10_000 {
        guard += 1;
        let mut improved = false;
        for m in 0..d {
            for dir in [-1.0, 1.0] {
                let mut cand = x.clone();
                cand[m] = (x[m] + dir * step[m]).clamp(bounds.lower[m], bounds.upper[m]);
                if cand[m] == x[m] {
                    continue;
                }
                let v = objective(&cand);
                if v < fx {
                    x = cand;
                    fx = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (fx, x)
}

/// Next price: approximate minimizer of [`surrogate_lcb`] over `bounds`.
///
/// `t` is the number of observations in `gp`.
pub fn choose_next_price(
    gp: &GpState,
    schedule: &BetaSchedule,
    config: &AcquisitionConfig,
    t: usize,
    bounds: &PriceBox,
) -> Result<Acquisition> {
    let beta_t = beta(schedule, t.max(1), gp)?;
    let (p, value, grid_min) = minimize_on_box(
        |x| surrogate_lcb(gp, &PriceVector::new(x.to_vec()), beta_t, config.epsilon, t),
        bounds,
        config.grid_points_per_dim,
        config.refine_starts,
        config.refine_tol,
    );
    Ok(Acquisition {
        price: PriceVector::new(p),
        value,
        grid_min,
    })
}
