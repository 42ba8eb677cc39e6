use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cipher::CipherVec;
use super::keys::{PublicKey, Reader, KEY_VERSION};
use super::params::Backend;
use crate::error::{Error, Result};

pub(crate) const CIPHER_MAGIC: &[u8; 4] = b"PPCV";

/// Fixed header size of a ciphertext blob.
pub const CIPHER_HEADER_BYTES: usize = 4 + 1 + 1 + 4 + 4 + 8 + 8 + 8 + 4;

impl PublicKey {
    fn keystream(&self, nonce: u64) -> ChaCha8Rng {
        let mut seed = self.ctx.wire_seed;
        for (s, n) in seed.iter_mut().zip(nonce.to_le_bytes()) {
            *s ^= n;
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Serialize a ciphertext. Slot payloads are masked with a keystream
    /// bound to the key and the ciphertext nonce, so the blob carries no
    /// plaintext bit patterns.
    pub fn serialize(&self, c: &CipherVec) -> Vec<u8> {
        let mut out = Vec::with_capacity(CIPHER_HEADER_BYTES + 8 * c.slots.len());
        self.write_cipher(c, &mut out);
        out
    }

    pub(crate) fn write_cipher(&self, c: &CipherVec, out: &mut Vec<u8>) {
        out.extend_from_slice(CIPHER_MAGIC);
        out.push(KEY_VERSION);
        out.push(c.backend.tag());
        out.extend_from_slice(&c.depth.to_le_bytes());
        out.extend_from_slice(&c.chain_depth.to_le_bytes());
        out.extend_from_slice(&c.key_id.to_le_bytes());
        out.extend_from_slice(&c.nonce.to_le_bytes());
        out.extend_from_slice(&c.noise.to_le_bytes());
        out.extend_from_slice(&(c.slots.len() as u32).to_le_bytes());
        let mut ks = self.keystream(c.nonce);
        for s in &c.slots {
            out.extend_from_slice(&(s.to_bits() ^ ks.next_u64()).to_le_bytes());
        }
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<CipherVec> {
        let mut r = Reader::new(bytes);
        let c = self.read_cipher(&mut r)?;
        r.finish()?;
        Ok(c)
    }

    pub(crate) fn read_cipher(&self, r: &mut Reader<'_>) -> Result<CipherVec> {
        r.expect_header(CIPHER_MAGIC)?;
        let backend = Backend::from_tag(r.u8()?)
            .ok_or_else(|| Error::Wire("unknown backend tag".into()))?;
        let depth = r.u32()?;
        let chain_depth = r.u32()?;
        let key_id = r.u64()?;
        let nonce = r.u64()?;
        let noise = r.f64()?;
        let n = r.u32()? as usize;
        if key_id != self.key_id() {
            return Err(Error::Protocol(
                "ciphertext blob was produced under a different key".into(),
            ));
        }
        if backend != self.params().backend {
            return Err(Error::Protocol("ciphertext blob backend mismatch".into()));
        }
        if n != self.batch_size() {
            return Err(Error::Shape {
                expected: self.batch_size(),
                got: n,
            });
        }
        if depth > self.params().multiplicative_depth {
            return Err(Error::Wire(format!("depth {depth} exceeds the key's budget")));
        }
        let mut ks = self.keystream(nonce);
        let mut slots = Vec::with_capacity(n);
        for _ in 0..n {
            slots.push(f64::from_bits(r.u64()? ^ ks.next_u64()));
        }
        let levels_left = self.params().multiplicative_depth - depth;
        Ok(CipherVec::build(
            slots,
            depth,
            chain_depth,
            noise,
            nonce,
            key_id,
            backend,
            self.params().modeled_ciphertext_bytes(levels_left),
            std::sync::Arc::clone(&self.ctx.tracker),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, HeParams, KeyMaterial, PartyId};

    #[test]
    fn cipher_blob_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let km = keygen(&HeParams::default(), &[PartyId::P1, PartyId::P2], &mut rng).unwrap();
        let pk = km.public();
        let c = pk.encrypt_values(&[1.25, -3.0, 42.0], &mut rng).unwrap();
        let c = pk.mul_const(&c, 2.0).unwrap();
        let blob = pk.serialize(&c);
        assert_eq!(&blob[..4], b"PPCV");
        assert_eq!(blob.len(), CIPHER_HEADER_BYTES + 8 * 128);
        for v in [2.5f64, -6.0, 84.0] {
            let needle = v.to_le_bytes();
            assert!(!blob.windows(8).any(|w| w == needle));
        }
        let back = pk.deserialize(&blob).unwrap();
        assert_eq!(back.depth_consumed(), 1);
        let q = km.quorum();
        assert_eq!(pk.decrypt(&back, &q).unwrap(), pk.decrypt(&c, &q).unwrap());
        assert!(pk.deserialize(&blob[..blob.len() - 1]).is_err());
        let mut bad = blob.clone();
        bad[0] = b'X';
        assert!(matches!(pk.deserialize(&bad), Err(Error::Wire(_))));
    }

    #[test]
    fn key_blobs_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let km = keygen(&HeParams::bootstrapped(), &[PartyId::P1, PartyId::P2], &mut rng).unwrap();
        let blob = km.to_blob();
        assert_eq!(&blob[..4], b"PPKM");
        assert_eq!(blob[4], 1);
        let back = KeyMaterial::from_blob(&blob).unwrap();
        assert_eq!(back.public().key_id(), km.public().key_id());
        assert_eq!(back.public().params(), km.public().params());

        let c = km.public().encrypt_values(&[9.0], &mut rng).unwrap();
        let moved = back.public().deserialize(&km.public().serialize(&c)).unwrap();
        let v = back.public().decrypt(&moved, &back.quorum()).unwrap();
        assert_eq!(v.values()[0], 9.0);

        let pk_blob = km.public().to_blob();
        assert_eq!(&pk_blob[..4], b"PPPK");
        let pk = PublicKey::from_blob(&pk_blob).unwrap();
        assert!(pk.decrypt(&moved_for(&pk, &km, &c), &[]).is_err());
        assert!(KeyMaterial::from_blob(&pk_blob).is_err());
    }

    fn moved_for(pk: &PublicKey, km: &KeyMaterial, c: &CipherVec) -> CipherVec {
        pk.deserialize(&km.public().serialize(c)).unwrap()
    }
}
