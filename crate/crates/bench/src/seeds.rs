//! Seed derivation.
//!
//! Every random draw in an experiment descends from the master seed:
//!
//! ```text
//! rep_seed(k)        = splitmix64(master + (k + 1) * GAMMA)
//! stream(rep, s)     = splitmix64(rep_seed ^ splitmix64(s + 1))
//! ```
//!
//! where `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64
//! generator and `GAMMA = 0x9E3779B97F4A7C15`. Streams are fixed small
//! integers so that adding a method never shifts another draw.

pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rep_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master.wrapping_add((rep as u64 + 1).wrapping_mul(GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 0,
    Split = 1,
    CorruptTrain = 2,
    CorruptTest = 3,
    Solver = 4,
}

pub fn stream(rep_seed: u64, s: Stream) -> u64 {
    splitmix64(rep_seed ^ splitmix64(s as u64 + 1))
}
