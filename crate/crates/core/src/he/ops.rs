use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cipher::{CipherVec, PlainVec};
use super::keys::{PublicKey, SecretShare};
use super::params::Backend;
use crate::error::{Error, Result};
use crate::seed::mix64;

#[derive(Clone, Copy)]
#[repr(u64)]
enum Op {
    Add = 1,
    Sub,
    AddPlain,
    Neg,
    Mul,
    MulPlain,
    MulInt,
    Rotate,
    Bootstrap,
}

/// Bootstrap noise relative to `noise_sigma`.
const BOOTSTRAP_NOISE_FACTOR: f64 = 16.0;
/// Multiplication noise relative to `noise_sigma`.
const MUL_NOISE_FACTOR: f64 = 2.0;

fn child_nonce(op: Op, a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b ^ mix64(op as u64)))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl PublicKey {
    fn depth_budget(&self) -> u32 {
        self.ctx.params.multiplicative_depth
    }

    fn leveled_sigma(&self) -> f64 {
        match self.ctx.params.backend {
            Backend::Exact => 0.0,
            Backend::Leveled => self.ctx.params.noise_sigma,
        }
    }

    fn wrap(&self, slots: Vec<f64>, depth: u32, chain: u32, noise: f64, nonce: u64) -> CipherVec {
        let p = &self.ctx.params;
        let bytes = p.modeled_ciphertext_bytes(p.multiplicative_depth - depth);
        CipherVec::build(
            slots,
            depth,
            chain,
            noise,
            nonce,
            self.ctx.key_id,
            p.backend,
            bytes,
            Arc::clone(&self.ctx.tracker),
        )
    }

    /// Add N(0, scale·σ) to every slot, seeded by the result nonce.
    fn perturb(&self, slots: &mut [f64], nonce: u64, scale: f64) -> f64 {
        let sigma = self.leveled_sigma() * scale;
        if sigma == 0.0 {
            return 0.0;
        }
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        let mut rng = ChaCha8Rng::seed_from_u64(nonce);
        for s in slots.iter_mut() {
            *s += normal.sample(&mut rng);
        }
        sigma
    }

    fn check(&self, ct: &CipherVec) -> Result<()> {
        if ct.key_id != self.ctx.key_id {
            return Err(Error::Protocol(
                "ciphertext was produced under a different key".into(),
            ));
        }
        if ct.backend != self.ctx.params.backend {
            return Err(Error::Protocol(format!(
                "backend mismatch: {:?} vs {:?}",
                ct.backend, self.ctx.params.backend
            )));
        }
        Ok(())
    }

    fn check_plain(&self, p: &PlainVec) -> Result<()> {
        if p.len() != self.batch_size() {
            return Err(Error::Shape {
                expected: self.batch_size(),
                got: p.len(),
            });
        }
        Ok(())
    }

    fn next_depth(&self, site: &str, depth: u32) -> Result<u32> {
        let needed = depth + 1;
        let budget = self.depth_budget();
        if needed > budget {
            return Err(Error::DepthExhausted {
                site: site.to_string(),
                needed,
                budget,
            });
        }
        Ok(needed)
    }

    pub fn encrypt<R: RngCore + ?Sized>(&self, p: &PlainVec, rng: &mut R) -> Result<CipherVec> {
        self.check_plain(p)?;
        let nonce = rng.next_u64();
        let mut slots = p.values().to_vec();
        let noise = self.perturb(&mut slots, nonce, 1.0);
        Ok(self.wrap(slots, 0, 0, noise, nonce))
    }

    /// Encrypt `values`, zero-padded to the batch size.
    pub fn encrypt_values<R: RngCore + ?Sized>(
        &self,
        values: &[f64],
        rng: &mut R,
    ) -> Result<CipherVec> {
        self.encrypt(&PlainVec::new(values.to_vec(), self.batch_size())?, rng)
    }

    /// Encrypt `v` into every slot.
    pub fn encrypt_broadcast<R: RngCore + ?Sized>(&self, v: f64, rng: &mut R) -> Result<CipherVec> {
        self.encrypt(&PlainVec::broadcast(v, self.batch_size()), rng)
    }

    fn zip(&self, op: Op, a: &CipherVec, b: &CipherVec, f: impl Fn(f64, f64) -> f64) -> Result<CipherVec> {
        self.check(a)?;
        self.check(b)?;
        let slots = a.slots.iter().zip(&b.slots).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.wrap(
            slots,
            a.depth.max(b.depth),
            a.chain_depth.max(b.chain_depth),
            a.noise + b.noise,
            child_nonce(op, a.nonce, b.nonce),
        ))
    }

    pub fn add(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        self.zip(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        self.zip(Op::Sub, a, b, |x, y| x - y)
    }

    /// Sum of a non-empty list, folded left to right.
    pub fn add_many(&self, items: &[CipherVec]) -> Result<CipherVec> {
        let (first, rest) = items
            .split_first()
            .ok_or_else(|| Error::Consistency("add_many over an empty list".into()))?;
        let mut acc = first.clone();
        for c in rest {
            acc = self.add(&acc, c)?;
        }
        Ok(acc)
    }

    fn map_plain(&self, a: &CipherVec, p: &PlainVec, f: impl Fn(f64, f64) -> f64) -> Result<CipherVec> {
        self.check(a)?;
        self.check_plain(p)?;
        let slots = a.slots.iter().zip(p.values()).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.wrap(
            slots,
            a.depth,
            a.chain_depth,
            a.noise,
            child_nonce(Op::AddPlain, a.nonce, 0),
        ))
    }

    pub fn add_plain(&self, a: &CipherVec, p: &PlainVec) -> Result<CipherVec> {
        self.map_plain(a, p, |x, y| x + y)
    }

    pub fn sub_plain(&self, a: &CipherVec, p: &PlainVec) -> Result<CipherVec> {
        self.map_plain(a, p, |x, y| x - y)
    }

    /// `p - a`.
    pub fn plain_sub(&self, p: &PlainVec, a: &CipherVec) -> Result<CipherVec> {
        self.map_plain(a, p, |x, y| y - x)
    }

    pub fn add_const(&self, a: &CipherVec, c: f64) -> Result<CipherVec> {
        self.check(a)?;
        Ok(self.wrap(
            a.slots.iter().map(|x| x + c).collect(),
            a.depth,
            a.chain_depth,
            a.noise,
            child_nonce(Op::AddPlain, a.nonce, c.to_bits()),
        ))
    }

    /// `c - a`.
    pub fn const_sub(&self, c: f64, a: &CipherVec) -> Result<CipherVec> {
        self.check(a)?;
        Ok(self.wrap(
            a.slots.iter().map(|x| c - x).collect(),
            a.depth,
            a.chain_depth,
            a.noise,
            child_nonce(Op::Neg, a.nonce, c.to_bits()),
        ))
    }

    pub fn neg(&self, a: &CipherVec) -> Result<CipherVec> {
        self.const_sub(0.0, a)
    }

    pub fn mul(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        self.check(a)?;
        self.check(b)?;
        let depth = self.next_depth("mul", a.depth.max(b.depth))?;
        let nonce = child_nonce(Op::Mul, a.nonce, b.nonce);
        let mut slots: Vec<f64> = a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect();
        let fresh = self.perturb(&mut slots, nonce, MUL_NOISE_FACTOR);
        let noise = a.noise * max_abs(&b.slots) + b.noise * max_abs(&a.slots) + a.noise * b.noise + fresh;
        Ok(self.wrap(slots, depth, a.chain_depth.max(b.chain_depth) + 1, noise, nonce))
    }

    pub fn square(&self, a: &CipherVec) -> Result<CipherVec> {
        self.mul(a, a)
    }

    pub fn mul_plain(&self, a: &CipherVec, p: &PlainVec) -> Result<CipherVec> {
        self.check(a)?;
        self.check_plain(p)?;
        let depth = self.next_depth("mul_plain", a.depth)?;
        let nonce = child_nonce(Op::MulPlain, a.nonce, 0);
        let mut slots: Vec<f64> = a.slots.iter().zip(p.values()).map(|(x, y)| x * y).collect();
        let fresh = self.perturb(&mut slots, nonce, MUL_NOISE_FACTOR);
        let noise = a.noise * max_abs(p.values()) + fresh;
        Ok(self.wrap(slots, depth, a.chain_depth + 1, noise, nonce))
    }

    /// Multiplication by a real constant; costs a level like `mul_plain`.
    pub fn mul_const(&self, a: &CipherVec, c: f64) -> Result<CipherVec> {
        self.check(a)?;
        let depth = self.next_depth("mul_const", a.depth)?;
        let nonce = child_nonce(Op::MulPlain, a.nonce, c.to_bits());
        let mut slots: Vec<f64> = a.slots.iter().map(|x| x * c).collect();
        let fresh = self.perturb(&mut slots, nonce, MUL_NOISE_FACTOR);
        Ok(self.wrap(slots, depth, a.chain_depth + 1, a.noise * c.abs() + fresh, nonce))
    }

    /// Multiplication by a small integer, realized as repeated addition, so
    /// it consumes no level.
    pub fn mul_int(&self, a: &CipherVec, k: i64) -> Result<CipherVec> {
        self.check(a)?;
        let kf = k as f64;
        Ok(self.wrap(
            a.slots.iter().map(|x| x * kf).collect(),
            a.depth,
            a.chain_depth,
            a.noise * kf.abs(),
            child_nonce(Op::MulInt, a.nonce, k as u64),
        ))
    }

    /// Cyclic left rotation by `k` slots (negative `k` rotates right).
    pub fn rotate(&self, a: &CipherVec, k: i64) -> Result<CipherVec> {
        self.check(a)?;
        let n = a.slots.len();
        let shift = k.rem_euclid(n as i64) as usize;
        let mut slots = a.slots.clone();
        slots.rotate_left(shift);
        let nonce = child_nonce(Op::Rotate, a.nonce, shift as u64);
        let fresh = if shift == 0 {
            0.0
        } else {
            self.perturb(&mut slots, nonce, 1.0)
        };
        Ok(self.wrap(slots, a.depth, a.chain_depth, a.noise + fresh, nonce))
    }

    /// Every slot receives the sum of all slots (log2(B) rotate-and-add steps).
    pub fn total_sum(&self, a: &CipherVec) -> Result<CipherVec> {
        let mut acc = a.clone();
        let mut step = 1;
        while step < acc.slots.len() {
            let r = self.rotate(&acc, step as i64)?;
            acc = self.add(&acc, &r)?;
            step <<= 1;
        }
        Ok(acc)
    }

    /// Every slot receives slot `i` of `a`. Costs one level.
    pub fn broadcast_slot(&self, a: &CipherVec, i: usize) -> Result<CipherVec> {
        if i >= self.batch_size() {
            return Err(Error::Range(format!(
                "slot {i} outside batch of {}",
                self.batch_size()
            )));
        }
        let masked = self
            .mul_plain(a, &PlainVec::unit(i, self.batch_size()))
            .map_err(|e| e.at("broadcast_slot"))?;
        self.total_sum(&masked)
    }

    pub fn levels_left(&self, a: &CipherVec) -> u32 {
        self.depth_budget() - a.depth
    }

    pub fn bootstrapping_enabled(&self) -> bool {
        self.ctx.params.bootstrapping_enabled
    }

    /// Refresh `a` so that `refresh_depth` levels remain.
    pub fn bootstrap(&self, a: &CipherVec) -> Result<CipherVec> {
        self.check(a)?;
        let p = &self.ctx.params;
        if !p.bootstrapping_enabled {
            return Err(Error::Config(
                "bootstrap requested but bootstrapping is disabled".into(),
            ));
        }
        let depth = a.depth.min(p.multiplicative_depth - p.refresh_levels());
        let nonce = child_nonce(Op::Bootstrap, a.nonce, 0);
        let mut slots = a.slots.clone();
        let fresh = self.perturb(&mut slots, nonce, BOOTSTRAP_NOISE_FACTOR);
        Ok(self.wrap(slots, depth, a.chain_depth, a.noise + fresh, nonce))
    }

    /// Bootstrap only if fewer than `min_levels` levels remain and
    /// bootstrapping is available.
    pub fn ensure_levels(&self, a: CipherVec, min_levels: u32) -> Result<CipherVec> {
        if self.levels_left(&a) < min_levels && self.bootstrapping_enabled() {
            self.bootstrap(&a)
        } else {
            Ok(a)
        }
    }

    /// Collective decryption. `quorum` must hold a valid share of every owner.
    pub fn decrypt(&self, a: &CipherVec, quorum: &[&SecretShare]) -> Result<PlainVec> {
        self.check(a)?;
        self.authorize(quorum)?;
        PlainVec::exact(a.slots.clone(), self.batch_size())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, HeParams, KeyMaterial, PartyId};
    use proptest::prelude::*;

    fn setup(params: HeParams) -> (KeyMaterial, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let km = keygen(&params, &[PartyId::P1, PartyId::P2], &mut rng).unwrap();
        (km, rng)
    }

    fn dec(km: &KeyMaterial, c: &CipherVec) -> Vec<f64> {
        km.public().decrypt(c, &km.quorum()).unwrap().into_vec()
    }

    #[test]
    fn add_sub_identity() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let a = pk.encrypt_values(&[1.0, 2.0], &mut rng).unwrap();
        let b = pk.encrypt_values(&[3.0, 4.0], &mut rng).unwrap();
        let z = pk.encrypt_values(&[], &mut rng).unwrap();
        assert_eq!(&dec(&km, &pk.add(&a, &b).unwrap())[..3], &[4.0, 6.0, 0.0]);
        assert!(dec(&km, &pk.sub(&a, &a).unwrap()).iter().all(|v| *v == 0.0));
        assert_eq!(dec(&km, &pk.add(&a, &z).unwrap()), dec(&km, &a));
    }

    #[test]
    fn encryptions_are_randomized() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let a = pk.encrypt_values(&[5.0], &mut rng).unwrap();
        let b = pk.encrypt_values(&[5.0], &mut rng).unwrap();
        assert_ne!(pk.serialize(&a), pk.serialize(&b));
    }

    #[test]
    fn third_mul_exhausts_depth_two() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let v = pk.encrypt_values(&[2.0, 3.0], &mut rng).unwrap();
        let w = pk.encrypt_values(&[4.0, 5.0], &mut rng).unwrap();
        let u = pk.encrypt_values(&[1.0, 1.0], &mut rng).unwrap();
        let vw = pk.mul(&v, &w).unwrap();
        assert_eq!(&dec(&km, &vw)[..2], &[8.0, 15.0]);
        let vwu = pk.mul(&vw, &u).unwrap();
        assert_eq!(vwu.depth_consumed(), 2);
        match pk.mul(&vwu, &u) {
            Err(Error::DepthExhausted { site, needed, budget }) => {
                assert_eq!((site.as_str(), needed, budget), ("mul", 3, 2));
            }
            other => panic!("expected depth error, got {other:?}"),
        }
    }

    #[test]
    fn plain_ones_costs_a_level() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let v = pk.encrypt_values(&[7.0, -1.5], &mut rng).unwrap();
        let r = pk.mul_plain(&v, &PlainVec::broadcast(1.0, 128)).unwrap();
        assert_eq!(dec(&km, &r), dec(&km, &v));
        assert_eq!(r.depth_consumed(), 1);
    }

    #[test]
    fn rotate_left() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let v = pk.encrypt_values(&[1.0, 2.0, 3.0], &mut rng).unwrap();
        let r = dec(&km, &pk.rotate(&v, 1).unwrap());
        assert_eq!(&r[..3], &[2.0, 3.0, 0.0]);
        assert_eq!(r[127], 1.0);
        assert_eq!(dec(&km, &pk.rotate(&v, 0).unwrap()), dec(&km, &v));
        assert_eq!(
            dec(&km, &pk.rotate(&v, -1).unwrap()),
            dec(&km, &pk.rotate(&v, 127).unwrap())
        );
    }

    #[test]
    fn bootstrap_bookkeeping() {
        let (km, mut rng) = setup(HeParams::bootstrapped());
        let pk = km.public();
        let mut c = pk.encrypt_values(&[0.5, 1.5], &mut rng).unwrap();
        let before = dec(&km, &c);
        for _ in 0..11 {
            c = pk.mul_const(&c, 1.0).unwrap();
        }
        assert_eq!(c.depth_consumed(), 11);
        let b = pk.bootstrap(&c).unwrap();
        assert_eq!(b.depth_consumed(), 12 - pk.params().refresh_levels());
        assert_eq!(b.chain_depth(), 11);
        assert_eq!(dec(&km, &b), before);

        let (km2, mut rng2) = setup(HeParams::default());
        let c = km2.public().encrypt_values(&[1.0], &mut rng2).unwrap();
        assert!(matches!(km2.public().bootstrap(&c), Err(Error::Config(_))));
    }

    #[test]
    fn quorum_rules() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let c = pk.encrypt_values(&[1.0], &mut rng).unwrap();
        assert!(pk.decrypt(&c, &km.quorum()).is_ok());
        let p1 = km.share(PartyId::P1).unwrap();
        assert!(matches!(pk.decrypt(&c, &[p1]), Err(Error::Authorization(_))));
        assert!(matches!(pk.decrypt(&c, &[]), Err(Error::Authorization(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let other = keygen(&HeParams::default(), &[PartyId::P1, PartyId::P2], &mut rng).unwrap();
        let foreign: Vec<_> = other.quorum();
        assert!(matches!(pk.decrypt(&c, &foreign), Err(Error::Authorization(_))));
        assert!(matches!(
            other.public().add(&c, &c),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn single_owner_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let km = keygen(&HeParams::default(), &[PartyId::P1], &mut rng).unwrap();
        assert_eq!(km.shares().count(), 1);
        let c = km.public().encrypt_values(&[2.0], &mut rng).unwrap();
        assert_eq!(dec(&km, &c)[0], 2.0);
        assert!(keygen(&HeParams::default(), &[], &mut rng).is_err());
        assert!(keygen(&HeParams::default(), &[PartyId::P3], &mut rng).is_err());
        let bad = HeParams {
            batch_size: 127,
            ..HeParams::default()
        };
        assert!(matches!(
            keygen(&bad, &[PartyId::P1], &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn leveled_roundtrip_within_six_sigma() {
        let sigma = 1e-9;
        let params = HeParams {
            batch_size: 1024,
            ..HeParams::default()
        }
        .with_backend(Backend::Leveled, sigma);
        let (km, mut rng) = setup(params);
        let pk = km.public();
        let mut worst = 0.0f64;
        let mut total = 0;
        while total < 10_000 {
            let v: Vec<f64> = (0..1024).map(|i| (i as f64) * 0.37 - 100.0).collect();
            let c = pk.encrypt_values(&v, &mut rng).unwrap();
            for (x, y) in dec(&km, &c).iter().zip(&v) {
                worst = worst.max((x - y).abs());
            }
            total += 1024;
        }
        assert!(worst <= 6.0 * sigma, "worst {worst}");
        assert!(worst > 0.0);
    }

    #[test]
    fn total_sum_and_broadcast() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let v: Vec<f64> = (0..128).map(|i| i as f64).collect();
        let c = pk.encrypt_values(&v, &mut rng).unwrap();
        let s = dec(&km, &pk.total_sum(&c).unwrap());
        assert!(s.iter().all(|x| *x == 8128.0));
        let b = dec(&km, &pk.broadcast_slot(&c, 5).unwrap());
        assert!(b.iter().all(|x| *x == 5.0));
    }

    #[test]
    fn memory_tracks_live_ciphertexts() {
        let (km, mut rng) = setup(HeParams::default());
        let pk = km.public();
        let base = pk.memory().live_bytes();
        let c = pk.encrypt_values(&[1.0], &mut rng).unwrap();
        assert_eq!(pk.memory().live_bytes() - base, pk.params().modeled_ciphertext_bytes(2));
        let d = pk.mul(&c, &c).unwrap();
        assert_eq!(d.modeled_bytes(), pk.params().modeled_ciphertext_bytes(1));
        drop(c);
        drop(d);
        assert_eq!(pk.memory().live_bytes(), base);
    }

    fn small_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1000i32..1000, 1..16)
            .prop_map(|v| v.into_iter().map(|x| x as f64 / 8.0).collect())
    }

    proptest! {
        #[test]
        fn homomorphism_exact(v in small_vec(), w in small_vec(), op in 0u8..3) {
            let (km, mut rng) = setup(HeParams::default());
            let pk = km.public();
            let a = pk.encrypt_values(&v, &mut rng).unwrap();
            let b = pk.encrypt_values(&w, &mut rng).unwrap();
            let r = match op {
                0 => pk.add(&a, &b),
                1 => pk.sub(&a, &b),
                _ => pk.mul(&a, &b),
            }.unwrap();
            let got = dec(&km, &r);
            let pad = |x: &[f64], i: usize| x.get(i).copied().unwrap_or(0.0);
            for (i, g) in got.iter().enumerate() {
                let (x, y) = (pad(&v, i), pad(&w, i));
                let want = match op { 0 => x + y, 1 => x - y, _ => x * y };
                prop_assert_eq!(*g, want);
            }
        }

        #[test]
        fn homomorphism_leveled(v in small_vec(), w in small_vec(), op in 0u8..3) {
            let params = HeParams::default().with_backend(Backend::Leveled, 1e-6);
            let (km, mut rng) = setup(params);
            let pk = km.public();
            let a = pk.encrypt_values(&v, &mut rng).unwrap();
            let b = pk.encrypt_values(&w, &mut rng).unwrap();
            let r = match op {
                0 => pk.add(&a, &b),
                1 => pk.sub(&a, &b),
                _ => pk.mul(&a, &b),
            }.unwrap();
            let got = dec(&km, &r);
            let pad = |x: &[f64], i: usize| x.get(i).copied().unwrap_or(0.0);
            for (i, g) in got.iter().enumerate() {
                let (x, y) = (pad(&v, i), pad(&w, i));
                let want = match op { 0 => x + y, 1 => x - y, _ => x * y };
                prop_assert!((g - want).abs() <= 6.0 * r.noise_estimate());
            }
        }

        #[test]
        fn rotation_composes(i in -300i64..300, j in -300i64..300, v in small_vec()) {
            let (km, mut rng) = setup(HeParams::default());
            let pk = km.public();
            let c = pk.encrypt_values(&v, &mut rng).unwrap();
            let lhs = pk.rotate(&pk.rotate(&c, i).unwrap(), j).unwrap();
            let rhs = pk.rotate(&c, (i + j).rem_euclid(128)).unwrap();
            prop_assert_eq!(dec(&km, &lhs), dec(&km, &rhs));
            let mut sorted_in = dec(&km, &c);
            let mut sorted_out = dec(&km, &lhs);
            sorted_in.sort_by(f64::total_cmp);
            sorted_out.sort_by(f64::total_cmp);
            prop_assert_eq!(sorted_in, sorted_out);
        }

        #[test]
        fn depth_never_decreases(ops in prop::collection::vec(0u8..4, 1..12)) {
            let (km, mut rng) = setup(HeParams::bootstrapped());
            let pk = km.public();
            let mut c = pk.encrypt_values(&[1.0], &mut rng).unwrap();
            for op in ops {
                let prev = c.depth_consumed();
                let next = match op {
                    0 => pk.add(&c, &c),
                    1 => pk.mul(&c, &c),
                    2 => pk.rotate(&c, 3),
                    _ => pk.mul_plain(&c, &PlainVec::broadcast(1.0, 128)),
                };
                match next {
                    Ok(n) => { prop_assert!(n.depth_consumed() >= prev); c = n; }
                    Err(Error::DepthExhausted { .. }) => prop_assert_eq!(prev, 12),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }
}
