//! Counter-based random-number streams for reproducible parallel Monte Carlo.
//!
//! Every shot draws from an independent ChaCha8 stream whose key is derived
//! from `(master seed, stage tag, shot index)`. Results therefore do not
//! depend on scheduling: a shot gets the same stream whether it runs first or
//! last, on one thread or sixteen.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag separating the RNG domains of different simulation stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage(pub u64);

impl Stage {
    pub const RESET: Stage = Stage(0x01);
    pub const REPEATED_INIT: Stage = Stage(0x02);
    pub const READOUT_SHOT: Stage = Stage(0x03);
    pub const RABI: Stage = Stage(0x04);
    pub const QND: Stage = Stage(0x05);
    pub const PARITY_SHOT: Stage = Stage(0x06);
    pub const TOMOGRAPHY: Stage = Stage(0x07);
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by `(seed, stage, index)`.
pub fn shot_rng(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let a = splitmix64(&mut state);
    state ^= stage.0.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let b = splitmix64(&mut state);
    state ^= index.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
