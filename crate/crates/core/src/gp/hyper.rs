//! Type-II maximum likelihood for kernel hyperparameters.
//!
//! Parameters are optimized in log space: `ln l_1..ln l_d` (squared
//! exponential only), `ln s^2` and `ln sigma`. Each start runs projected
//! gradient ascent with backtracking inside the box bounds.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernel::{gram, KernelKind, KernelSpec};
use crate::game::PriceVector;
use crate::linalg::Cholesky;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Box bounds in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_sd: (f64, f64),
}

impl HyperBounds {
    /// Lengthscales in `[1e-2, 1e2]` box widths, `s^2` in `[1e-4, 1e2]`,
    /// `sigma` in `[1e-4, 10]`.
    pub fn for_box_width(width: f64) -> Self {
        HyperBounds {
            lengthscale: (1e-2 * width, 1e2 * width),
            signal_variance: (1e-4, 1e2),
            noise_sd: (1e-4, 10.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bounds: HyperBounds,
    pub starts: usize,
    pub max_iters: usize,
    /// Returned when the data carry no signal.
    pub fallback_kernel: KernelSpec,
    pub fallback_noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit {
    pub kernel: KernelSpec,
    pub noise_sd: f64,
    pub log_likelihood: f64,
    /// Observations were all identical; the fallback was returned unfitted.
    pub degenerate: bool,
    /// Log likelihood at each start before ascent.
    pub start_log_likelihoods: Vec<f64>,
}

/// Parameter layout for a kernel kind and input dimension.
#[derive(Debug, Clone, Copy)]
struct Layout {
    kind: KernelKind,
    dim: usize,
}

impl Layout {
    fn len(&self) -> usize {
        match self.kind {
            KernelKind::SquaredExponential => self.dim + 2,
            KernelKind::Linear => 2,
        }
    }

    fn n_lengthscales(&self) -> usize {
        match self.kind {
            KernelKind::SquaredExponential => self.dim,
            KernelKind::Linear => 0,
        }
    }

    fn decode(&self, theta: &[f64]) -> (KernelSpec, f64) {
        let nl = self.n_lengthscales();
        let lengthscales = theta[..nl].iter().map(|v| libm::exp(*v)).collect();
        let kernel = KernelSpec {
            kind: self.kind,
            lengthscales,
            signal_variance: libm::exp(theta[nl]),
        };
        (kernel, libm::exp(theta[nl + 1]))
    }

    fn encode(&self, kernel: &KernelSpec, noise_sd: f64) -> Vec<f64> {
        let mut theta: Vec<f64> = kernel.lengthscales[..self.n_lengthscales()]
            .iter()
            .map(|v| libm::log(*v))
            .collect();
        theta.push(libm::log(kernel.signal_variance));
        theta.push(libm::log(noise_sd));
        theta
    }

    fn log_bounds(&self, b: &HyperBounds) -> Vec<(f64, f64)> {
        let ln = |(lo, hi): (f64, f64)| (libm::log(lo), libm::log(hi));
        let mut out = vec![ln(b.lengthscale); self.n_lengthscales()];
        out.push(ln(b.signal_variance));
        out.push(ln(b.noise_sd));
        out
    }
}

/// `log p(y | X, theta)` for a zero-mean GP.
pub fn log_marginal_likelihood(
    inputs: &[PriceVector],
    observations: &[f64],
    kernel: &KernelSpec,
    noise_sd: f64,
) -> Result<f64> {
    let n = inputs.len();
    let mut k = gram(kernel, inputs);
    for i in 0..n {
        k[i * n + i] += noise_sd * noise_sd;
    }
    let (chol, _) = Cholesky::factor_jittered(&k, n)?;
    let alpha = chol.solve(observations);
    let fit: f64 = observations.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    Ok(-0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI)
}

/// Log marginal likelihood and its gradient with respect to the log-space
/// parameters (`ln l_m` for squared exponential kernels, then `ln s^2`, `ln sigma`).
pub fn log_marginal_likelihood_grad(
    inputs: &[PriceVector],
    observations: &[f64],
    kernel: &KernelSpec,
    noise_sd: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = inputs.len();
    let layout = Layout {
        kind: kernel.kind,
        dim: inputs.first().map_or(kernel.lengthscales.len(), |p| p.len()),
    };
    let kern = gram(kernel, inputs);
    let mut ky = kern.clone();
    let s2 = noise_sd * noise_sd;
    for i in 0..n {
        ky[i * n + i] += s2;
    }
    let (chol, _) = Cholesky::factor_jittered(&ky, n)?;
    let alpha = chol.solve(observations);
    let fit: f64 = observations.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let value = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;

    // W = alpha alpha^T - K_y^{-1}; dL/dtheta = 1/2 tr(W dK_y/dtheta)
    let inv = chol.inverse();
    let mut wmat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            wmat[i * n + j] = alpha[i] * alpha[j] - inv[i * n + j];
        }
    }
    let mut grad = vec![0.0; layout.len()];
    for (m, g) in grad.iter_mut().take(layout.n_lengthscales()).enumerate() {
        let l2 = kernel.lengthscales[m] * kernel.lengthscales[m];
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = inputs[i].as_slice()[m] - inputs[j].as_slice()[m];
                acc += wmat[i * n + j] * kern[i * n + j] * diff * diff / l2;
            }
        }
        *g = 0.5 * acc;
    }
    let nl = layout.n_lengthscales();
    grad[nl] = 0.5 * wmat.iter().zip(&kern).map(|(w, k)| w * k).sum::<f64>();
    grad[nl + 1] = 0.5 * (0..n).map(|i| wmat[i * n + i]).sum::<f64>() * 2.0 * s2;
    Ok((value, grad))
}

fn clamp_into(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

fn ascend(
    inputs: &[PriceVector],
    observations: &[f64],
    layout: Layout,
    bounds: &[(f64, f64)],
    start: Vec<f64>,
    max_iters: usize,
) -> Option<(Vec<f64>, f64)> {
    let eval = |theta: &[f64]| {
        let (k, s) = layout.decode(theta);
        log_marginal_likelihood_grad(inputs, observations, &k, s).ok()
    };
    let mut theta = start;
    let (mut value, mut grad) = eval(&theta)?;
    let mut step = 0.1;
    for _ in 0..max_iters {
        let mut probe = theta.clone();
        for (p, g) in probe.iter_mut().zip(&grad) {
            *p += g;
        }
        clamp_into(&mut probe, bounds);
        let pg: f64 = probe
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        if libm::sqrt(pg) < 1e-7 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let mut cand = theta.clone();
            for (c, g) in cand.iter_mut().zip(&grad) {
                *c += step * g;
            }
            clamp_into(&mut cand, bounds);
            let dir: f64 = cand
                .iter()
                .zip(&theta)
                .zip(&grad)
                .map(|((c, t), g)| (c - t) * g)
                .sum();
            if let Some((v, g)) = eval(&cand) {
                if v >= value + 1e-4 * dir {
                    let gain = v - value;
                    theta = cand;
                    value = v;
                    grad = g;
                    accepted = true;
                    step = (step * 2.0).min(1e3);
                    if gain <= 1e-12 * (1.0 + libm::fabs(value)) {
                        return Some((theta, value));
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((theta, value))
}

/// Multi-start local maximization of the log marginal likelihood.
///
/// Start points are drawn log-uniformly from the bounds. With fewer than two
/// observations this is an error; with identical observations the fallback
/// hyperparameters come back with `degenerate = true`.
pub fn fit_hyperparameters<R: Rng + ?Sized>(
    inputs: &[PriceVector],
    observations: &[f64],
    kind: KernelKind,
    options: &FitOptions,
    rng: &mut R,
) -> Result<HyperFit> {
    if inputs.len() != observations.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: observations.len(),
        });
    }
    if observations.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            have: observations.len(),
        });
    }
    let first = observations[0];
    let spread = observations
        .iter()
        .map(|y| libm::fabs(y - first))
        .fold(0.0, f64::max);
    if spread <= 1e-12 * (1.0 + libm::fabs(first)) {
        log::warn!("hyperparameter fit skipped: all observations equal {first}");
        let ll = log_marginal_likelihood(
            inputs,
            observations,
            &options.fallback_kernel,
            options.fallback_noise_sd,
        )
        .unwrap_or(f64::NAN);
        return Ok(HyperFit {
            kernel: options.fallback_kernel.clone(),
            noise_sd: options.fallback_noise_sd,
            log_likelihood: ll,
            degenerate: true,
            start_log_likelihoods: Vec::new(),
        });
    }

    let layout = Layout {
        kind,
        dim: inputs[0].len(),
    };
    let bounds = layout.log_bounds(&options.bounds);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut start_values = Vec::with_capacity(options.starts);
    for _ in 0..options.starts.max(1) {
        let start: Vec<f64> = bounds
            .iter()
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        let (k0, s0) = layout.decode(&start);
        start_values.push(
            log_marginal_likelihood(inputs, observations, &k0, s0).unwrap_or(f64::NEG_INFINITY),
        );
        if let Some((theta, value)) =
            ascend(inputs, observations, layout, &bounds, start, options.max_iters)
        {
            if best.as_ref().is_none_or(|(_, v)| value > *v) {
                best = Some((theta, value));
            }
        }
    }
    let (theta, value) = best.ok_or(Error::FactorizationFailed {
        jitter: crate::linalg::JITTER_MAX,
    })?;
    let (kernel, noise_sd) = layout.decode(&theta);
    Ok(HyperFit {
        kernel,
        noise_sd,
        log_likelihood: value,
        degenerate: false,
        start_log_likelihoods: start_values,
    })
}

/// Encodes `(kernel, noise_sd)` into the optimizer's log-space vector.
pub fn to_log_params(kernel: &KernelSpec, noise_sd: f64) -> Vec<f64> {
    Layout {
        kind: kernel.kind,
        dim: kernel.lengthscales.len(),
    }
    .encode(kernel, noise_sd)
}

/// Inverse of [`to_log_params`]; `dim` is the input dimension.
pub fn from_log_params(kind: KernelKind, dim: usize, theta: &[f64]) -> (KernelSpec, f64) {
    Layout { kind, dim }.decode(theta)
}
