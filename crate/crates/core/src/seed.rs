//! Named random substreams derived from a single root seed.
//!
//! Every consumer of randomness (generator, keys, obfuscation, masks, ...)
//! asks for a stream by name plus a tuple of indices, so results do not
//! depend on the order in which workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RootSeed(pub u64);

impl RootSeed {
    pub fn stream(&self, name: &str, indices: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.bytes(name, indices))
    }

    pub fn bytes(&self, name: &str, indices: &[u64]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"pper-substream");
        h.update(self.0.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        for i in indices {
            h.update(i.to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn u64(&self, name: &str, indices: &[u64]) -> u64 {
        let b = self.bytes(name, indices);
        u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
    }
}

/// SplitMix64 finalizer; used to derive child nonces from parent nonces.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
