use alloc::vec::Vec;

use super::kernel::{gram, KernelSpec};
use crate::game::PriceVector;
use crate::linalg::{Cholesky, JITTER_MAX, JITTER_START};
use crate::{Error, Result};

/// How stored costs are mapped before conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ObservationScaling {
    /// Zero-mean prior directly on the realized costs.
    #[default]
    Raw,
    /// Subtract the sample mean and divide by the sample standard deviation.
    /// This rescales the posterior standard deviation, so the effective
    /// confidence width changes with it.
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        libm::sqrt(self.variance)
    }
}

/// Serializable part of a [`GpState`]; the factorization is rebuilt on load.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpSnapshot {
    pub inputs: Vec<PriceVector>,
    pub observations: Vec<f64>,
    pub kernel: KernelSpec,
    pub noise_sd: f64,
}

/// Observed `(price, realized cost)` history plus the cached factor of
/// `K + sigma^2 I`.
///
/// Immutable: [`GpState::append`] returns a new state.
#[derive(Debug, Clone)]
pub struct GpState {
    inputs: Vec<PriceVector>,
    observations: Vec<f64>,
    kernel: KernelSpec,
    noise_sd: f64,
    scaling: ObservationScaling,
    chol: Cholesky,
    jitter: f64,
    alpha: Vec<f64>,
    offset: f64,
    scale: f64,
}

impl GpState {
    pub fn new(kernel: KernelSpec, noise_sd: f64) -> Self {
        GpState {
            inputs: Vec::new(),
            observations: Vec::new(),
            kernel,
            noise_sd,
            scaling: ObservationScaling::Raw,
            chol: Cholesky::empty(),
            jitter: JITTER_START,
            alpha: Vec::new(),
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn with_scaling(mut self, scaling: ObservationScaling) -> Self {
        self.scaling = scaling;
        self.refresh_targets();
        self
    }

    pub fn from_data(
        kernel: KernelSpec,
        noise_sd: f64,
        inputs: Vec<PriceVector>,
        observations: Vec<f64>,
        scaling: ObservationScaling,
    ) -> Result<Self> {
        if inputs.len() != observations.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: observations.len(),
            });
        }
        if !(noise_sd > 0.0) {
            return Err(Error::InvalidConfig("noise_sd must be positive".into()));
        }
        let mut state = GpState {
            inputs,
            observations,
            kernel,
            noise_sd,
            scaling,
            chol: Cholesky::empty(),
            jitter: JITTER_START,
            alpha: Vec::new(),
            offset: 0.0,
            scale: 1.0,
        };
        state.refactor()?;
        Ok(state)
    }

    pub fn from_snapshot(snapshot: GpSnapshot) -> Result<Self> {
        Self::from_data(
            snapshot.kernel,
            snapshot.noise_sd,
            snapshot.inputs,
            snapshot.observations,
            ObservationScaling::Raw,
        )
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            inputs: self.inputs.clone(),
            observations: self.observations.clone(),
            kernel: self.kernel.clone(),
            noise_sd: self.noise_sd,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[PriceVector] {
        &self.inputs
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn scaling(&self) -> ObservationScaling {
        self.scaling
    }

    /// Diagonal jitter currently folded into the factor.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Observations after the configured scaling.
    pub fn scaled_observations(&self) -> Vec<f64> {
        self.observations
            .iter()
            .map(|y| (y - self.offset) / self.scale)
            .collect()
    }

    /// Same data, different hyperparameters.
    pub fn with_hyperparameters(&self, kernel: KernelSpec, noise_sd: f64) -> Result<Self> {
        Self::from_data(
            kernel,
            noise_sd,
            self.inputs.clone(),
            self.observations.clone(),
            self.scaling,
        )
    }

    fn noise_var(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.inputs.len();
        let mut k = gram(&self.kernel, &self.inputs);
        let s2 = self.noise_var();
        for i in 0..n {
            k[i * n + i] += s2;
        }
        let (chol, jitter) = Cholesky::factor_jittered(&k, n)?;
        self.chol = chol;
        self.jitter = jitter;
        self.refresh_targets();
        Ok(())
    }

    fn refresh_targets(&mut self) {
        let t = self.observations.len();
        (self.offset, self.scale) = match self.scaling {
            ObservationScaling::Raw => (0.0, 1.0),
            ObservationScaling::Standardized if t == 0 => (0.0, 1.0),
            ObservationScaling::Standardized => {
                let mean = self.observations.iter().sum::<f64>() / t as f64;
                let var = self
                    .observations
                    .iter()
                    .map(|y| (y - mean) * (y - mean))
                    .sum::<f64>()
                    / t as f64;
                let sd = libm::sqrt(var);
                (mean, if sd > 0.0 { sd } else { 1.0 })
            }
        };
        if self.chol.dim() == t {
            self.alpha = self.chol.solve(&self.scaled_observations());
        }
    }

    /// New state with `(pi, cost)` appended. Extends the factor by one row
    /// when possible, otherwise refactors from scratch.
    pub fn append(&self, pi: PriceVector, cost: f64) -> Result<Self> {
        if !cost.is_finite() {
            return Err(Error::InvalidConfig("observed cost must be finite".into()));
        }
        let mut next = self.clone();
        let col: Vec<f64> = self
            .inputs
            .iter()
            .map(|p| self.kernel.eval(p.as_slice(), pi.as_slice()))
            .collect();
        let diag = self.kernel.eval(pi.as_slice(), pi.as_slice()) + self.noise_var() + self.jitter;
        next.inputs.push(pi);
        next.observations.push(cost);
        if next.chol.extend(&col, diag) {
            next.refresh_targets();
        } else {
            log::debug!("incremental factor update failed at t = {}; refactoring", next.len());
            next.refactor()?;
        }
        Ok(next)
    }

    /// Posterior mean and variance at `pi` over the realized costs.
    pub fn posterior(&self, pi: &PriceVector) -> Posterior {
        let prior = self.kernel.eval(pi.as_slice(), pi.as_slice());
        if self.inputs.is_empty() {
            return Posterior {
                mean: self.offset,
                variance: prior * self.scale * self.scale,
            };
        }
        let kvec: Vec<f64> = self
            .inputs
            .iter()
            .map(|p| self.kernel.eval(p.as_slice(), pi.as_slice()))
            .collect();
        let mean = kvec.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = self.chol.solve_lower(&kvec);
        let mut variance = prior - v.iter().map(|a| a * a).sum::<f64>();
        if variance < 0.0 {
            if variance < -1e-10 {
                log::warn!("posterior variance {variance:e} clamped to zero");
            }
            variance = 0.0;
        }
        Posterior {
            mean: self.offset + self.scale * mean,
            variance: variance * self.scale * self.scale,
        }
    }

    /// `1/2 log det(I + sigma^-2 K)` on the stored inputs.
    ///
    /// This is the information gain of the realized design, a lower bound on
    /// the maximum information gain over all designs of the same size (which
    /// grows like `O(d log t)` for the linear kernel and `O(log^{d+1} t)` for
    /// the squared exponential one).
    pub fn greedy_info_gain(&self) -> Result<f64> {
        let n = self.inputs.len();
        if n == 0 {
            return Ok(0.0);
        }
        let mut m = gram(&self.kernel, &self.inputs);
        let inv = 1.0 / self.noise_var();
        for v in m.iter_mut() {
            *v *= inv;
        }
        for i in 0..n {
            m[i * n + i] += 1.0;
        }
        let chol = Cholesky::factor(&m, n).ok_or(Error::FactorizationFailed { jitter: JITTER_MAX })?;
        Ok(0.5 * chol.log_det())
    }
}

/// Free-function form of [`GpState::posterior`].
pub fn posterior(state: &GpState, pi: &PriceVector) -> Posterior {
    state.posterior(pi)
}

/// Free-function form of [`GpState::greedy_info_gain`].
pub fn greedy_info_gain(state: &GpState) -> Result<f64> {
    state.greedy_info_gain()
}
