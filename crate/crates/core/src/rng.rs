//! Seeded, counter-based random streams.
//!
//! Every consumer asks for a named substream of a 64-bit seed, so results do not depend on
//! the order in which independent draws are made or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::domain::Domain;
use crate::error::Result;

/// Substream identifiers.
pub mod stream {
    pub const TRAINING: u64 = 1;
    pub const ANCHORS: u64 = 2;
    pub const SIMULATION: u64 = 3;
    pub const PARTICLES: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
    pub const INIT: u64 = 6;
}

pub type StreamRng = ChaCha12Rng;

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` points drawn uniformly from a bounded domain, row-major `n × d`.
pub fn uniform_points<R: Rng + ?Sized>(rng: &mut R, domain: &Domain, n: usize) -> Result<Vec<Vec<f64>>> {
    let bounds = domain.box_bounds()?;
    Ok((0..n)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect())
}
