//! Counter-based, splittable random streams.
//!
//! Every random decision in the pipeline is drawn from a [`RngStream`] keyed by
//! `(seed, stream)`. The stream id is derived by hashing a domain tag together
//! with indices (class, image, variant), so the draws for one class never
//! depend on how many other classes were generated or in which order.
//! ChaCha8 is used as the underlying block function; its output is specified
//! bit-for-bit and does not vary across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Domain tags used to separate the stream families of each generator.
pub mod domain {
    pub const PROCGEN: u64 = 0x7072_6f63_6765_6e00;
    pub const MORPHGEN: u64 = 0x6d6f_7270_6867_656e;
    pub const FRACTAL: u64 = 0x6672_6163_7461_6c00;
    pub const RENDER: u64 = 0x7265_6e64_6572_0000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
    /// Starting position in 32-bit words.
    pub counter: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            counter: 0,
        }
    }

    /// Stream for `index` within the family identified by `domain`.
    pub fn keyed(seed: u64, domain: u64, index: u64) -> Self {
        Self::new(seed, splitmix64(domain ^ splitmix64(index)))
    }

    /// Independent sub-stream, e.g. one per image of a class.
    pub fn child(&self, index: u64) -> Self {
        Self::new(
            self.seed,
            splitmix64(self.stream.rotate_left(17) ^ splitmix64(index ^ 0xa076_1d64_78bd_642f)),
        )
    }

    pub fn at_counter(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }

    /// Materializes the generator positioned at `counter`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(self.counter));
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(s: RngStream) -> Vec<u64> {
        let mut r = s.rng();
        (0..8).map(|_| r.random()).collect()
    }

    #[test]
    fn same_key_same_sequence() {
        let s = RngStream::keyed(7, domain::PROCGEN, 3);
        assert_eq!(draws(s), draws(s));
    }

    #[test]
    fn different_streams_differ() {
        let a = RngStream::keyed(7, domain::PROCGEN, 3);
        let b = RngStream::keyed(7, domain::PROCGEN, 4);
        let c = RngStream::keyed(7, domain::FRACTAL, 3);
        assert_ne!(draws(a), draws(b));
        assert_ne!(draws(a), draws(c));
        assert_ne!(draws(a.child(0)), draws(a.child(1)));
    }

    #[test]
    fn counter_skips_ahead() {
        let s = RngStream::new(1, 2);
        let mut full = s.rng();
        let _: u32 = full.random();
        let _: u32 = full.random();
        let rest: u64 = full.random();
        let mut skipped = s.at_counter(2).rng();
        assert_eq!(rest, skipped.random::<u64>());
    }

    #[test]
    fn frozen_first_draw() {
        // Guards against silent changes in the stream derivation.
        let a = draws(RngStream::keyed(0, domain::RENDER, 0));
        assert_eq!(a[0], 9_143_040_106_989_708_367);
    }
}
