//! Reproducible, labelled random streams.
//!
//! Every source of randomness in a run (parameter init, epoch shuffling,
//! window placement) draws from its own [`RngStream`], keyed by the run seed
//! and a short label. Streams never share state, so adding a draw to one of
//! them cannot perturb another.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with an index into a new, well-separated seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base) ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let key = derive_seed(seed, fnv1a(label));
        Self {
            seed,
            label: label.to_owned(),
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// An independent stream for item `index` under this stream's label,
    /// e.g. one per (sample, pass) during augmentation.
    pub fn substream(&self, index: u64) -> Self {
        Self::new(derive_seed(self.seed, index), &self.label)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
