//! Runs the pricing experiment end to end: configuration files, the
//! regret baseline cache, seed/tolerance sweeps, CSV and JSON outputs, and
//! certification of finished runs.

pub mod certify;
mod error;
pub mod files;
pub mod logging;
pub mod run;
pub mod sweep;

pub use error::{HarnessError, Result};
pub use run::{run_one, BaselineCache, RunOutput};
