//! Named random sub-streams derived from one master seed.
//!
//! Each consumer (task data, weight init, batching, ...) draws from its own
//! ChaCha stream so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a; stable across platforms and releases.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG for sub-stream `name` of `master`.
pub fn substream(master: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(name));
    rng
}

/// A derived seed, for APIs that take a `u64` rather than an RNG.
pub fn subseed(master: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(master, name).next_u64()
}
