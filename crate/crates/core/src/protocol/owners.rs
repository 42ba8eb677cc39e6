//! The data owners' side of the protocol: collective decryption, masked
//! inverse replies and mask-pool generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::he::{CipherVec, KeyMaterial, PartyId, PlainVec, PublicKey, SecretShare};
use crate::par::Exec;
use crate::seed::{mix64, RootSeed};

/// Range of the slot-wise multiplicative masks, `[1/MASK_SPAN, MASK_SPAN]`
/// drawn log-uniformly.
pub const MASK_SPAN: f64 = 16.0;

/// P1 and P2 acting together. Each decryption combines both shares; the
/// exchange of partial decryptions between the owners is not modeled as
/// transport traffic.
pub struct Owners {
    pk: PublicKey,
    shares: Vec<SecretShare>,
    seed: RootSeed,
}

impl Owners {
    pub fn new(keys: &KeyMaterial, seed: RootSeed) -> Self {
        Self {
            pk: keys.public().clone(),
            shares: keys.shares().cloned().collect(),
            seed,
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.pk
    }

    pub fn parties(&self) -> Vec<PartyId> {
        self.shares.iter().map(SecretShare::party).collect()
    }

    fn quorum(&self) -> Vec<&SecretShare> {
        self.shares.iter().collect()
    }

    pub fn decrypt(&self, c: &CipherVec) -> Result<PlainVec> {
        self.pk.decrypt(c, &self.quorum())
    }

    pub fn decrypt_blob(&self, blob: &[u8]) -> Result<PlainVec> {
        self.decrypt(&self.pk.deserialize(blob)?)
    }

    /// Reply to a masked inverse request: decrypt each `r·x`, return fresh
    /// encryptions of `scale / (r·x)`.
    pub fn answer_inverse(&self, blobs: &[Vec<u8>], scale: f64, nonce_base: u64, exec: &Exec) -> Result<Vec<Vec<u8>>> {
        let idx: Vec<usize> = (0..blobs.len()).collect();
        exec.try_map(&idx, |&k| {
            let v = self.decrypt_blob(&blobs[k])?;
            let mut out = Vec::with_capacity(v.len());
            for (slot, x) in v.values().iter().enumerate() {
                if *x == 0.0 || !x.is_finite() {
                    return Err(Error::DataFault(format!(
                        "masked inverse request has a zero or non-finite slot {slot}"
                    )));
                }
                out.push(scale / x);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(nonce_base ^ mix64(k as u64)));
            let c = self.pk.encrypt(&PlainVec::exact(out, self.pk.batch_size())?, &mut rng)?;
            Ok(self.pk.serialize(&c))
        })
    }

    /// `count` fresh encryptions of slot-wise random masks.
    pub fn mask_pool(&self, count: usize, session: u64, refill: u64, exec: &Exec) -> Vec<Vec<u8>> {
        let base = self.seed.u64("masks", &[session, refill]);
        let b = self.pk.batch_size();
        exec.map_range(count, |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(base ^ mix64(k as u64)));
            let span = MASK_SPAN.ln();
            let vals: Vec<f64> = (0..b).map(|_| rng.random_range(-span..span).exp()).collect();
            let c = self
                .pk
                .encrypt(&PlainVec::exact(vals, b).expect("batch-sized"), &mut rng)
                .expect("plain has batch size");
            self.pk.serialize(&c)
        })
    }
}
