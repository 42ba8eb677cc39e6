//! Encrypted record chunks: owner-side construction and the blob format
//! stored at the evaluator.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocking::{chunk_key_index, BlockingKey, ChunkManifest};
use crate::dataio::Side;
use crate::equality::Encoding;
use crate::error::{Error, Result};
use crate::he::{CipherVec, PlainVec, PublicKey, Reader, KEY_VERSION};
use crate::matrix::Layout;
use crate::par::Exec;
use crate::prepared::Prepared;
use crate::seed::mix64;

const CHUNK_MAGIC: &[u8; 4] = b"PPCK";

/// One record as the evaluator holds it.
#[derive(Debug, Clone)]
pub struct EncryptedRecord {
    /// One token vector (SIMD) or one ciphertext per token slot.
    pub tokens: Vec<CipherVec>,
    /// Token-set cardinality, broadcast.
    pub card: CipherVec,
}

#[derive(Debug, Clone)]
pub struct EncryptedChunk {
    pub side: Side,
    pub index: usize,
    pub layout: Layout,
    pub records: Vec<EncryptedRecord>,
    /// Blocking key → encrypted in-chunk ids of the records carrying it.
    pub keys: BTreeMap<BlockingKey, Vec<CipherVec>>,
}

fn side_tag(s: Side) -> u8 {
    s.index() as u8
}

fn side_from_tag(t: u8) -> Result<Side> {
    match t {
        0 => Ok(Side::A),
        1 => Ok(Side::B),
        _ => Err(Error::Wire(format!("unknown side tag {t}"))),
    }
}

impl EncryptedChunk {
    /// Owner-side encryption of `data.records[range]`. `seed` fixes all
    /// encryption randomness of this chunk.
    #[allow(clippy::too_many_arguments)]
    pub fn encrypt(
        pk: &PublicKey,
        data: &Prepared,
        range: Range<usize>,
        index: usize,
        layout: Layout,
        enc: &Encoding,
        seed: u64,
        exec: &Exec,
    ) -> Result<Self> {
        let b = pk.batch_size();
        if range.len() > b {
            return Err(Error::Config(format!("chunk of {} records exceeds batch size {b}", range.len())));
        }
        let start = range.start;
        let records = exec.try_map_range(range.len(), |local| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(local as u64)));
            let tv = &data.tokens[start + local];
            let slots = enc.token_slots(tv);
            let tokens = match layout {
                Layout::Simd => vec![pk.encrypt(&PlainVec::exact(slots, b)?, &mut rng)?],
                Layout::ElementWise => slots
                    .iter()
                    .map(|v| pk.encrypt_broadcast(*v, &mut rng))
                    .collect::<Result<_>>()?,
            };
            let card = pk.encrypt_broadcast(tv.cardinality() as f64, &mut rng)?;
            Ok(EncryptedRecord { tokens, card })
        })?;
        let index_map = chunk_key_index(&data.keys, range);
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x6b65_7973));
        let mut keys = BTreeMap::new();
        for (k, ids) in index_map {
            let cts = ids
                .iter()
                .map(|&i| pk.encrypt_broadcast(enc.id(i)?, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            keys.insert(k, cts);
        }
        Ok(Self {
            side: data.side,
            index,
            layout,
            records,
            keys,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ciphertext_count(&self) -> usize {
        self.records.iter().map(|r| r.tokens.len() + 1).sum::<usize>()
            + self.keys.values().map(Vec::len).sum::<usize>()
    }

    /// Modeled backend size of all ciphertexts in the chunk.
    pub fn modeled_bytes(&self) -> u64 {
        let recs: u64 = self
            .records
            .iter()
            .map(|r| r.tokens.iter().map(CipherVec::modeled_bytes).sum::<u64>() + r.card.modeled_bytes())
            .sum();
        recs + self.keys.values().flatten().map(CipherVec::modeled_bytes).sum::<u64>()
    }

    pub fn manifest(&self) -> ChunkManifest {
        ChunkManifest {
            side: self.side,
            chunk_index: self.index,
            records: self.records.len(),
            key_codes: self.keys.keys().map(|k| k.0).collect(),
            ciphertexts: self.ciphertext_count(),
            bytes: self.modeled_bytes(),
        }
    }

    pub fn to_blob(&self, pk: &PublicKey) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHUNK_MAGIC);
        out.push(KEY_VERSION);
        out.push(side_tag(self.side));
        out.push(self.layout.tag());
        out.extend_from_slice(&(self.index as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.tokens.len() as u32).to_le_bytes());
            for t in &r.tokens {
                pk.write_cipher(t, &mut out);
            }
            pk.write_cipher(&r.card, &mut out);
        }
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        for (k, ids) in &self.keys {
            out.extend_from_slice(&k.0.to_le_bytes());
            out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
            for c in ids {
                pk.write_cipher(c, &mut out);
            }
        }
        out
    }

    pub fn from_blob(pk: &PublicKey, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(CHUNK_MAGIC)?;
        let side = side_from_tag(r.u8()?)?;
        let layout = Layout::from_tag(r.u8()?)?;
        let index = r.u32()? as usize;
        let n = r.u32()? as usize;
        if n > pk.batch_size() {
            return Err(Error::Wire(format!("chunk of {n} records exceeds batch size")));
        }
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let nt = r.u32()? as usize;
            if nt > pk.batch_size() {
                return Err(Error::Wire(format!("record with {nt} token ciphertexts")));
            }
            let tokens = (0..nt).map(|_| pk.read_cipher(&mut r)).collect::<Result<_>>()?;
            let card = pk.read_cipher(&mut r)?;
            records.push(EncryptedRecord { tokens, card });
        }
        let nk = r.u32()? as usize;
        let mut keys = BTreeMap::new();
        for _ in 0..nk {
            let code = BlockingKey(r.u64()?);
            let m = r.u32()? as usize;
            if m > n {
                return Err(Error::Wire(format!("key lists {m} ids in a chunk of {n}")));
            }
            let ids = (0..m).map(|_| pk.read_cipher(&mut r)).collect::<Result<_>>()?;
            if keys.insert(code, ids).is_some() {
                return Err(Error::Wire(format!("duplicate key {code:?}")));
            }
        }
        r.finish()?;
        Ok(Self {
            side,
            index,
            layout,
            records,
            keys,
        })
    }
}
