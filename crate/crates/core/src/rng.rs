//! Seeded random streams.
//!
//! Every random quantity comes from a ChaCha8 generator. A master seed plus a
//! stream id selects an independent stream via ChaCha's native stream
//! counter, so replications, folds, and trees can draw concurrently without
//! sharing state and still reproduce bit-for-bit on any platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic child seed, used when a sub-task needs a fresh master seed
/// rather than a stream (e.g. a replication that itself spawns streams).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inversion of the CDF.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    crate::stats::normal_quantile(open_unit(rng))
}

/// Fisher-Yates shuffle driven by `open_unit`, independent of rand's
/// internal sampling algorithms.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = (open_unit(rng) * (i + 1) as f64) as usize;
        items.swap(i, j.min(i));
    }
}
