//! Seeded random streams.
//!
//! Every consumer of randomness (a vehicle's process noise, its roadside
//! camera, the bus, a scripted driver) draws from its own ChaCha stream
//! derived from the scenario seed, so adding or removing one consumer never
//! shifts the samples another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Stream = ChaCha8Rng;

/// What a stream is used for. Combined with an entity index into a ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Bus,
    ProcessNoise,
    Camera,
    Driver,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Bus => 1,
            Purpose::ProcessNoise => 2,
            Purpose::Camera => 3,
            Purpose::Driver => 4,
        }
    }
}

/// Opens the stream for `purpose` of entity number `index` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose.tag() << 32) | (index & 0xffff_ffff));
    rng
}

/// One Gaussian draw. A zero standard deviation returns `mean` exactly.
pub fn gaussian(rng: &mut Stream, mean: f64, std: f64) -> f64 {
    match Normal::new(mean, std) {
        Ok(n) => n.sample(rng),
        Err(_) => mean,
    }
}
