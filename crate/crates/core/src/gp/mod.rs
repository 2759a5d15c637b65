//! Gaussian-process surrogate of the leader's cost.
//!
//! The posterior conditions on the costs the leader actually observed, which
//! come from approximate equilibria; there is no separate "clean" target.

pub mod hyper;
pub mod kernel;
pub mod state;

pub use hyper::{fit_hyperparameters, log_marginal_likelihood, FitOptions, HyperBounds, HyperFit};
pub use kernel::{gram, kernel_eval, KernelKind, KernelSpec};
pub use state::{greedy_info_gain, posterior, GpSnapshot, GpState, ObservationScaling, Posterior};
