use std::sync::Arc;

use super::memory::MemTracker;
use super::params::Backend;
use crate::error::{Error, Result};

/// A plaintext slot vector of exactly `batch_size` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainVec {
    values: Vec<f64>,
}

impl PlainVec {
    /// Zero-pads `values` to `batch_size`.
    pub fn new(mut values: Vec<f64>, batch_size: usize) -> Result<Self> {
        if values.len() > batch_size {
            return Err(Error::Shape {
                expected: batch_size,
                got: values.len(),
            });
        }
        values.resize(batch_size, 0.0);
        Ok(Self { values })
    }

    /// Requires `values.len() == batch_size` exactly.
    pub fn exact(values: Vec<f64>, batch_size: usize) -> Result<Self> {
        if values.len() != batch_size {
            return Err(Error::Shape {
                expected: batch_size,
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(batch_size: usize) -> Self {
        Self {
            values: vec![0.0; batch_size],
        }
    }

    pub fn broadcast(v: f64, batch_size: usize) -> Self {
        Self {
            values: vec![v; batch_size],
        }
    }

    /// Indicator of slot `i`.
    pub fn unit(i: usize, batch_size: usize) -> Self {
        let mut values = vec![0.0; batch_size];
        values[i] = 1.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// A simulated ciphertext. Slot values are private to this crate and only
/// leave through [`PublicKey::decrypt`](super::PublicKey::decrypt) with a full quorum.
pub struct CipherVec {
    pub(crate) slots: Vec<f64>,
    pub(crate) depth: u32,
    pub(crate) chain_depth: u32,
    pub(crate) noise: f64,
    pub(crate) nonce: u64,
    pub(crate) key_id: u64,
    pub(crate) backend: Backend,
    bytes: u64,
    tracker: Arc<MemTracker>,
}

impl CipherVec {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        slots: Vec<f64>,
        depth: u32,
        chain_depth: u32,
        noise: f64,
        nonce: u64,
        key_id: u64,
        backend: Backend,
        bytes: u64,
        tracker: Arc<MemTracker>,
    ) -> Self {
        tracker.register(bytes);
        Self {
            slots,
            depth,
            chain_depth,
            noise,
            nonce,
            key_id,
            backend,
            bytes,
            tracker,
        }
    }

    /// Levels consumed on the current modulus chain (reset by bootstrap).
    pub fn depth_consumed(&self) -> u32 {
        self.depth
    }

    /// Total multiplicative depth of the computation that produced this
    /// ciphertext. Never reset; used to check depth estimates.
    pub fn chain_depth(&self) -> u32 {
        self.chain_depth
    }

    /// Upper bound on the accumulated absolute per-slot noise std-dev.
    pub fn noise_estimate(&self) -> f64 {
        self.noise
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn nonce(&self) -> u64 {
        self.nonce
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Modeled serialized size in bytes.
    pub fn modeled_bytes(&self) -> u64 {
        self.bytes
    }
}

impl Clone for CipherVec {
    fn clone(&self) -> Self {
        Self::build(
            self.slots.clone(),
            self.depth,
            self.chain_depth,
            self.noise,
            self.nonce,
            self.key_id,
            self.backend,
            self.bytes,
            Arc::clone(&self.tracker),
        )
    }
}

impl Drop for CipherVec {
    fn drop(&mut self) {
        self.tracker.release(self.bytes);
    }
}

impl std::fmt::Debug for CipherVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CipherVec")
            .field("len", &self.slots.len())
            .field("depth", &self.depth)
            .field("chain_depth", &self.chain_depth)
            .field("noise", &self.noise)
            .field("backend", &self.backend)
            .finish_non_exhaustive()
    }
}
