use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream `stream` under `seed`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed drawn from stream `stream` of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    seeded(seed, stream).next_u64()
}
