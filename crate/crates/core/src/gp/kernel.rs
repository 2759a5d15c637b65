use alloc::vec;
use alloc::vec::Vec;

use crate::game::PriceVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelKind {
    SquaredExponential,
    Linear,
}

/// Covariance function. `signal_variance` is `s^2`; `lengthscales` is only
/// read by the squared exponential kernel (one per input dimension).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl KernelSpec {
    pub fn squared_exponential(lengthscales: Vec<f64>, signal_variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::SquaredExponential,
            lengthscales,
            signal_variance,
        }
    }

    pub fn linear(signal_variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            lengthscales: Vec::new(),
            signal_variance,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::InvalidConfig("signal variance must be positive".into()));
        }
        if self.kind == KernelKind::SquaredExponential {
            if self.lengthscales.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: self.lengthscales.len(),
                });
            }
            if !self.lengthscales.iter().all(|&l| l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig("lengthscales must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::SquaredExponential => {
                let r2: f64 = a
                    .iter()
                    .zip(b)
                    .zip(&self.lengthscales)
                    .map(|((x, y), l)| {
                        let z = (x - y) / l;
                        z * z
                    })
                    .sum();
                self.signal_variance * libm::exp(-0.5 * r2)
            }
            KernelKind::Linear => {
                self.signal_variance * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
            }
        }
    }
}

/// `k(a, b)` for price vectors.
pub fn kernel_eval(spec: &KernelSpec, a: &PriceVector, b: &PriceVector) -> f64 {
    spec.eval(a.as_slice(), b.as_slice())
}

/// Row-major Gram matrix over `inputs`.
pub fn gram(spec: &KernelSpec, inputs: &[PriceVector]) -> Vec<f64> {
    let n = inputs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(inputs[i].as_slice(), inputs[j].as_slice());
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}
