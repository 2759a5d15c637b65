//! Learning approximate Stackelberg equilibria from realized leader costs.
//!
//! A single leader picks a price vector, a population of followers settles
//! (approximately) on the Nash equilibrium of the induced game, and the leader
//! only sees the scalar cost of the resulting outcome. The leader models that
//! cost with a Gaussian process and picks the next price by minimizing a lower
//! confidence bound.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. File formats,
//! the CLI and logging setup live in the `stackelberg-harness` crate.
//!
//! Layout:
//! - [`game`]: the ride-hailing charging game, its pseudogradient, the feasible
//!   set projection and the leader's distribution-matching cost.
//! - [`equilibrium`]: projected pseudogradient descent, a high-precision NE
//!   oracle, best responses and epsilon-Nash certificates.
//! - [`gp`]: kernels, posterior, hyperparameter calibration, information gain.
//! - [`learner`]: confidence-width schedules and the acquisition step.
//! - [`experiment`]: the outer loop, regret accounting and certification.
#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod equilibrium;
mod error;
pub mod experiment;
pub mod game;
pub mod gp;
pub mod learner;
pub mod linalg;
pub mod seed;

pub use error::{Error, Result};
pub use game::{FleetAllocation, GameParams, JointAllocation, PriceVector, RideHailGame};
