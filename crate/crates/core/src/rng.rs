//! Seedable random streams and stable seed derivation.
//!
//! Every trial owns an independent [`Stream`]; seeds for sub-streams are
//! derived by hashing a parent seed with a list of tags so that adding a
//! consumer never perturbs the sequences seen by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random generator used throughout the crate. ChaCha output is
/// portable across platforms and crate versions.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit combination of a seed with a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &t in tags {
        h = mix64(h.rotate_left(23) ^ mix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

/// Hash a short string tag into a `u64` (FNV-1a) for use with [`derive_seed`].
pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
        assert_ne!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[3, 2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(tag("pred"), tag("gespar"));
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..8).map(|_| 0).scan(stream(3), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(stream(3), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
    }
}
