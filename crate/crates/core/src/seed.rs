//! Root-seed fan-out.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! root seed: the root seed keys the generator and the consumer's fixed
//! [`Stream`] id selects the stream. Adding a new consumer means adding a new
//! id, which leaves every existing stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    WarmupPrices = 1,
    Acquisition = 2,
    InnerLoop = 3,
    HyperparameterStarts = 4,
}

pub fn stream_rng(root: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream as u64);
    rng
}
