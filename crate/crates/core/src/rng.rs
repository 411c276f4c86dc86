//! Counter-based random substreams.
//!
//! Every stochastic component derives its generator from the master seed,
//! a static label and an index. Work split into blocks therefore draws the
//! same numbers no matter how the blocks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a; labels are short static strings.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for substream `(label, index)` of `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ label_hash(label)).wrapping_add(splitmix64(index)))
}

pub fn substream(master: u64, label: &str, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, label, 0));
    rng.set_stream(index);
    rng
}
