//! Counter-based random streams.
//!
//! Stream `i` of master seed `s` is ChaCha8 keyed by `seed_from_u64(s)` with
//! its 64-bit stream id set to `i`. Streams never overlap, and a stream's
//! draws do not depend on which thread consumes it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}
