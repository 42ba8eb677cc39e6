//! Evaluator-side interactive inverse sessions.

use crate::error::{Error, Result};
use crate::he::{CipherVec, PartyId, PublicKey};
use crate::par::Exec;
use crate::seed::mix64;

use super::owners::Owners;
use super::transport::{Message, Transport};

/// Largest number of masks fetched from the owners in one go.
pub const MAX_POOL_FETCH: usize = 1 << 15;

/// Interactive-inverse bookkeeping for one chunk pair (or one baseline run).
///
/// Masks are pre-generated by the owners and held as received blobs. The
/// pool starts at twice the expected number of inverses (capped at
/// [`MAX_POOL_FETCH`]) and is refilled
/// with an extra counted round when it runs dry. Requests alternate between
/// the owners in call order.
pub struct InteractiveSession<'a> {
    pk: &'a PublicKey,
    owners: &'a Owners,
    transport: &'a Transport,
    exec: Exec,
    session: u64,
    pool: Vec<Vec<u8>>,
    refill_size: usize,
    refills: u64,
    calls: u64,
    inverses: u64,
    responders: [u64; 2],
}

impl<'a> InteractiveSession<'a> {
    pub fn new(
        pk: &'a PublicKey,
        owners: &'a Owners,
        transport: &'a Transport,
        exec: Exec,
        session: u64,
        expected_inverses: usize,
    ) -> Self {
        let size = (2 * expected_inverses).clamp(1, MAX_POOL_FETCH);
        let mut s = Self {
            pk,
            owners,
            transport,
            exec,
            session,
            pool: Vec::new(),
            refill_size: size,
            refills: 0,
            calls: 0,
            inverses: 0,
            responders: [0; 2],
        };
        s.fetch_masks(size, false);
        s
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    fn responder(&self) -> PartyId {
        let parties = self.owners.parties();
        parties[(self.calls as usize) % parties.len()]
    }

    fn fetch_masks(&mut self, count: usize, extra_round: bool) {
        let owner = self.owners.parties()[0];
        let blobs = self.owners.mask_pool(count, self.session, self.refills, &self.exec);
        if extra_round {
            self.transport.round(PartyId::P3, owner);
        }
        if let Message::MaskPool(b) = self.transport.send(owner, PartyId::P3, Message::MaskPool(blobs)) {
            // Newest masks are consumed first.
            self.pool.extend(b);
        }
        self.refills += 1;
    }

    fn take_masks(&mut self, n: usize) -> Result<Vec<CipherVec>> {
        if self.pool.len() < n {
            let need = (n - self.pool.len()).max(self.refill_size);
            self.fetch_masks(need, true);
        }
        let start = self.pool.len() - n;
        let blobs: Vec<Vec<u8>> = self.pool.drain(start..).collect();
        self.exec.try_map(&blobs, |b| self.pk.deserialize(b))
    }

    /// One round trip: returns encryptions of `scale / x` for every `x`.
    /// Results sit one level above the deepest input mask product.
    pub fn inverse_batch(&mut self, xs: &[CipherVec], scale: f64) -> Result<Vec<CipherVec>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let masks = self.take_masks(xs.len())?;
        let pk = self.pk;
        let idx: Vec<usize> = (0..xs.len()).collect();
        let masked = self.exec.try_map(&idx, |&k| {
            let m = pk.mul(&masks[k], &xs[k]).map_err(|e| e.at("interactive_inverse"))?;
            Ok(pk.serialize(&m))
        })?;
        let responder = self.responder();
        self.responders[responder.index()] += 1;
        self.transport.round(PartyId::P3, responder);
        let request = self.transport.send(PartyId::P3, responder, Message::Ciphertexts(masked));
        let Message::Ciphertexts(request) = request else {
            return Err(Error::Protocol("unexpected request payload".into()));
        };
        let nonce_base = mix64(self.session ^ mix64(self.calls ^ 0x5eed));
        let reply = self.owners.answer_inverse(&request, scale, nonce_base, &self.exec)?;
        let reply = self.transport.send(responder, PartyId::P3, Message::Ciphertexts(reply));
        let Message::Ciphertexts(reply) = reply else {
            return Err(Error::Protocol("unexpected reply payload".into()));
        };
        self.calls += 1;
        self.inverses += xs.len() as u64;
        self.exec.try_map(&idx, |&k| {
            let inv = pk.deserialize(&reply[k])?;
            pk.mul(&inv, &masks[k]).map_err(|e| e.at("interactive_inverse"))
        })
    }

    /// Single-ciphertext convenience wrapper.
    pub fn inverse(&mut self, x: &CipherVec, scale: f64) -> Result<CipherVec> {
        Ok(self.inverse_batch(std::slice::from_ref(x), scale)?.remove(0))
    }

    /// Batched round trips so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Ciphertexts inverted so far.
    pub fn inverses(&self) -> u64 {
        self.inverses
    }

    /// Round trips answered by P1 and P2.
    pub fn responders(&self) -> [u64; 2] {
        self.responders
    }

    pub fn mask_refills(&self) -> u64 {
        self.refills.saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use crate::testkit::Fixture;

    #[test]
    fn inverse_of_a_quarter_is_four() {
        let mut fx = Fixture::exact();
        let x = fx.broadcast(0.25);
        let mut s = fx.session(1, 4);
        let y = s.inverse(&x, 1.0).unwrap();
        for v in fx.decrypt(&y) {
            assert!((v - 4.0).abs() < 1e-9);
        }
        let z = s.inverse(&x, 1e-3).unwrap();
        assert!((fx.decrypt(&z)[0] - 4e-3).abs() < 1e-12);
    }

    #[test]
    fn each_call_is_one_round_and_two_messages() {
        let mut fx = Fixture::exact();
        let xs = vec![fx.broadcast(2.0), fx.broadcast(-3.0)];
        let mut s = fx.session(2, 8);
        let before = fx.transport.totals();
        s.inverse_batch(&xs, 1.0).unwrap();
        let mid = fx.transport.totals();
        assert_eq!(mid.messages - before.messages, 2);
        assert_eq!(mid.rounds - before.rounds, 1);
        s.inverse_batch(&xs, 1.0).unwrap();
        let after = fx.transport.totals();
        assert_eq!(after.messages - mid.messages, 2);
        assert_eq!(s.calls(), 2);
        assert_eq!(s.inverses(), 4);
        assert_eq!(s.responders(), [1, 1]);
        assert_eq!(s.mask_refills(), 0);
    }

    #[test]
    fn empty_pool_refills_with_a_counted_round() {
        let mut fx = Fixture::exact();
        let xs: Vec<_> = (1..=5).map(|i| fx.broadcast(f64::from(i))).collect();
        let mut s = fx.session(3, 1);
        let before = fx.transport.totals();
        let ys = s.inverse_batch(&xs, 1.0).unwrap();
        let after = fx.transport.totals();
        assert_eq!(s.mask_refills(), 1);
        assert_eq!(after.rounds - before.rounds, 2);
        assert_eq!(after.messages - before.messages, 3);
        for (i, y) in ys.iter().enumerate() {
            assert!((fx.decrypt(y)[0] - 1.0 / (i + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_slot_is_a_data_fault() {
        let mut fx = Fixture::exact();
        let x = fx.values(&[1.0, 0.0]);
        let mut s = fx.session(4, 2);
        assert_eq!(s.inverse(&x, 1.0).unwrap_err().kind(), "data_fault");
    }
}
