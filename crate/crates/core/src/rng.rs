//! Seeded, splittable randomness.
//!
//! Every sampling operation takes an explicit `u64` seed and derives one
//! ChaCha stream per unit of work (item, resample, restart). Streams are
//! independent of evaluation order, so per-item work can run in parallel —
//! or not — without changing a single variate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for stream `stream` of the generator seeded by `seed`.
#[inline]
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an operation-level seed from a base seed and a fixed tag,
/// so that distinct pipeline stages never share streams.
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
