//! Counter-based random streams.
//!
//! Every random quantity in an experiment is drawn from a ChaCha8 generator
//! keyed by the master seed and positioned on a stream selected by a hash of
//! a purpose tag and its indices. A draw therefore depends only on what it is
//! for, never on which worker thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Models = 1,
    Matrix = 2,
    Trial = 3,
    Noise = 4,
    CalibrationTrial = 5,
    CalibrationNoise = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream selector for `(purpose, indices)`.
pub fn stream_id(purpose: Purpose, indices: &[u64]) -> u64 {
    let mut h = splitmix(purpose as u64);
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(master_seed: u64, purpose: Purpose, indices: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(purpose, indices));
    rng
}
