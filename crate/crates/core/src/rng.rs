//! Seeded random streams.
//!
//! A run derives independent ChaCha streams from one seed, one per consumer,
//! so that turning a consumer on or off never shifts the numbers another
//! consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Task = 0,
    Init = 1,
    TrainData = 2,
    ValData = 3,
    WeightArch = 4,
    ThetaArch = 5,
    TestData = 6,
}

pub fn stream(seed: u64, which: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Uniform sample on `[lo, hi)`.
pub(crate) fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
