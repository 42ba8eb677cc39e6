//! Shared fixtures for unit tests.

use rand_chacha::ChaCha8Rng;

use crate::he::{keygen, CipherVec, HeParams, KeyMaterial, PartyId, PublicKey};
use crate::par::Exec;
use crate::protocol::{InteractiveSession, Owners, Transport};
use crate::seed::RootSeed;

pub(crate) struct Fixture {
    pub keys: KeyMaterial,
    pub owners: Owners,
    pub transport: Transport,
    pub rng: ChaCha8Rng,
}

impl Fixture {
    pub fn new(params: HeParams) -> Self {
        let root = RootSeed(11);
        let keys = keygen(&params, &[PartyId::P1, PartyId::P2], &mut root.stream("keys", &[])).unwrap();
        let owners = Owners::new(&keys, root);
        Self {
            keys,
            owners,
            transport: Transport::new(),
            rng: root.stream("test", &[]),
        }
    }

    pub fn exact() -> Self {
        Self::new(HeParams::default())
    }

    pub fn pk(&self) -> &PublicKey {
        self.keys.public()
    }

    pub fn session(&self, id: u64, expected: usize) -> InteractiveSession<'_> {
        InteractiveSession::new(self.pk(), &self.owners, &self.transport, Exec::new(false), id, expected)
    }

    pub fn broadcast(&mut self, v: f64) -> CipherVec {
        self.keys.public().encrypt_broadcast(v, &mut self.rng).unwrap()
    }

    pub fn values(&mut self, v: &[f64]) -> CipherVec {
        self.keys.public().encrypt_values(v, &mut self.rng).unwrap()
    }

    pub fn decrypt(&self, c: &CipherVec) -> Vec<f64> {
        self.owners.decrypt(c).unwrap().into_vec()
    }
}
