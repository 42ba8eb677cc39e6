use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::memory::MemTracker;
use super::params::HeParams;
use crate::error::{Error, Result};

/// The three protocol parties: two data owners and the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    P1,
    P2,
    P3,
}

impl PartyId {
    pub fn index(self) -> usize {
        match self {
            PartyId::P1 => 0,
            PartyId::P2 => 1,
            PartyId::P3 => 2,
        }
    }

    fn tag(self) -> u8 {
        self.index() as u8
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(PartyId::P1),
            1 => Some(PartyId::P2),
            2 => Some(PartyId::P3),
            _ => None,
        }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

pub(crate) struct KeyContext {
    pub(crate) key_id: u64,
    pub(crate) params: HeParams,
    pub(crate) owners: BTreeSet<PartyId>,
    pub(crate) wire_seed: [u8; 32],
    share_digests: BTreeMap<PartyId, [u8; 32]>,
    pub(crate) tracker: Arc<MemTracker>,
}

/// Public evaluation handle. Anyone holding it can encrypt and evaluate;
/// nobody can decrypt with it alone.
#[derive(Clone)]
pub struct PublicKey {
    pub(crate) ctx: Arc<KeyContext>,
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PublicKey")
            .field("key_id", &self.ctx.key_id)
            .field("owners", &self.ctx.owners)
            .finish_non_exhaustive()
    }
}

/// One owner's share of the collective decryption capability.
#[derive(Clone)]
pub struct SecretShare {
    party: PartyId,
    key_id: u64,
    secret: [u8; 32],
}

impl std::fmt::Debug for SecretShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretShare")
            .field("party", &self.party)
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

impl SecretShare {
    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

/// Public part plus the secret shares of every owner.
#[derive(Clone, Debug)]
pub struct KeyMaterial {
    public: PublicKey,
    shares: BTreeMap<PartyId, SecretShare>,
}

fn digest(secret: &[u8; 32]) -> [u8; 32] {
    Sha256::digest(secret).into()
}

/// Generate a collective key whose decryption quorum is exactly `owners`.
pub fn keygen<R: RngCore + ?Sized>(
    params: &HeParams,
    owners: &[PartyId],
    rng: &mut R,
) -> Result<KeyMaterial> {
    params.validate()?;
    let owners: BTreeSet<PartyId> = owners.iter().copied().collect();
    if owners.is_empty() {
        return Err(Error::Config("key needs at least one owner".into()));
    }
    if owners.contains(&PartyId::P3) {
        return Err(Error::Config("the evaluator cannot hold a secret share".into()));
    }
    let key_id = rng.next_u64();
    let mut wire_seed = [0u8; 32];
    rng.fill_bytes(&mut wire_seed);
    let mut shares = BTreeMap::new();
    let mut share_digests = BTreeMap::new();
    for &party in &owners {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        share_digests.insert(party, digest(&secret));
        shares.insert(
            party,
            SecretShare {
                party,
                key_id,
                secret,
            },
        );
    }
    let ctx = KeyContext {
        key_id,
        params: params.clone(),
        owners,
        wire_seed,
        share_digests,
        tracker: Arc::new(MemTracker::default()),
    };
    Ok(KeyMaterial {
        public: PublicKey { ctx: Arc::new(ctx) },
        shares,
    })
}

impl KeyMaterial {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn share(&self, party: PartyId) -> Option<&SecretShare> {
        self.shares.get(&party)
    }

    pub fn shares(&self) -> impl Iterator<Item = &SecretShare> {
        self.shares.values()
    }

    /// All shares, i.e. a full decryption quorum.
    pub fn quorum(&self) -> Vec<&SecretShare> {
        self.shares.values().collect()
    }

    /// Opaque blob: `PPKM`, version byte, public section, then shares.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(KEY_MAGIC);
        out.push(KEY_VERSION);
        self.public.write_public(&mut out);
        out.extend_from_slice(&(self.shares.len() as u32).to_le_bytes());
        for s in self.shares.values() {
            out.push(s.party.tag());
            out.extend_from_slice(&s.secret);
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(KEY_MAGIC)?;
        let public = PublicKey::read_public(&mut r)?;
        let n = r.u32()? as usize;
        let mut shares = BTreeMap::new();
        for _ in 0..n {
            let party = PartyId::from_tag(r.u8()?)
                .ok_or_else(|| Error::Wire("bad party tag".into()))?;
            let secret: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
            shares.insert(
                party,
                SecretShare {
                    party,
                    key_id: public.key_id(),
                    secret,
                },
            );
        }
        r.finish()?;
        Ok(KeyMaterial { public, shares })
    }
}

pub(crate) const KEY_MAGIC: &[u8; 4] = b"PPKM";
pub(crate) const PUBLIC_MAGIC: &[u8; 4] = b"PPPK";
pub(crate) const KEY_VERSION: u8 = 1;

impl PublicKey {
    pub fn key_id(&self) -> u64 {
        self.ctx.key_id
    }

    pub fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    pub fn batch_size(&self) -> usize {
        self.ctx.params.batch_size
    }

    pub fn owners(&self) -> &BTreeSet<PartyId> {
        &self.ctx.owners
    }

    pub fn memory(&self) -> &MemTracker {
        &self.ctx.tracker
    }

    /// Check that `quorum` holds a genuine share for every owner of this key.
    pub(crate) fn authorize(&self, quorum: &[&SecretShare]) -> Result<()> {
        for share in quorum {
            if share.key_id != self.ctx.key_id {
                return Err(Error::Authorization(format!(
                    "share of {} belongs to a different key",
                    share.party
                )));
            }
            match self.ctx.share_digests.get(&share.party) {
                Some(d) if *d == digest(&share.secret) => {}
                _ => {
                    return Err(Error::Authorization(format!(
                        "share of {} is not valid for this key",
                        share.party
                    )))
                }
            }
        }
        let missing: Vec<String> = self
            .ctx
            .owners
            .iter()
            .filter(|p| !quorum.iter().any(|s| s.party == **p))
            .map(|p| p.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Authorization(format!(
                "incomplete decryption quorum, missing {}",
                missing.join(",")
            )));
        }
        Ok(())
    }

    /// Opaque blob: `PPPK`, version byte, public section.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PUBLIC_MAGIC);
        out.push(KEY_VERSION);
        self.write_public(&mut out);
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(PUBLIC_MAGIC)?;
        let pk = Self::read_public(&mut r)?;
        r.finish()?;
        Ok(pk)
    }

    fn write_public(&self, out: &mut Vec<u8>) {
        let c = &self.ctx;
        out.extend_from_slice(&c.key_id.to_le_bytes());
        let params = serde_json::to_vec(&c.params).expect("params serialize");
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        out.extend_from_slice(&params);
        out.extend_from_slice(&c.wire_seed);
        out.extend_from_slice(&(c.share_digests.len() as u32).to_le_bytes());
        for (party, d) in &c.share_digests {
            out.push(party.tag());
            out.extend_from_slice(d);
        }
    }

    fn read_public(r: &mut Reader<'_>) -> Result<Self> {
        let key_id = r.u64()?;
        let len = r.u32()? as usize;
        let params: HeParams = serde_json::from_slice(r.bytes(len)?)?;
        params.validate()?;
        let wire_seed: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
        let n = r.u32()? as usize;
        let mut share_digests = BTreeMap::new();
        for _ in 0..n {
            let party = PartyId::from_tag(r.u8()?)
                .ok_or_else(|| Error::Wire("bad party tag".into()))?;
            let d: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
            share_digests.insert(party, d);
        }
        let owners = share_digests.keys().copied().collect();
        Ok(PublicKey {
            ctx: Arc::new(KeyContext {
                key_id,
                params,
                owners,
                wire_seed,
                share_digests,
                tracker: Arc::new(MemTracker::default()),
            }),
        })
    }
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Wire(format!(
                "truncated blob: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn expect_header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.bytes(4)?;
        if m != magic {
            return Err(Error::Wire(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u8()?;
        if v != KEY_VERSION {
            return Err(Error::Wire(format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Wire(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}
