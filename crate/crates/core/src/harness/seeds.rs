//! Counter-based seed derivation. Instance `k` of a run owns a ChaCha key
//! derived from `(master, k)`; stream 0 generates the instance and stream
//! `j + 1` drives design draw `j`. No state is shared between replications,
//! so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seed_key(master: u64, instance: u64) -> [u8; 32] {
    let mut state = master;
    // Separate the two inputs before mixing so (a, b) and (b, a) differ.
    let mut state2 = splitmix64(&mut state) ^ instance.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state2).to_le_bytes());
    }
    key
}

pub fn instance_rng(master: u64, instance: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_key(master, instance))
}

pub fn draw_rng(master: u64, instance: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(seed_key(master, instance));
    rng.set_stream(draw + 1);
    rng
}
