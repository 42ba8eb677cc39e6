use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};

/// Live-ciphertext byte accounting shared by every ciphertext under one key.
///
/// Sizes are the modeled CKKS sizes from [`HeParams::modeled_ciphertext_bytes`],
/// so the high-water mark tracks how many limbs are alive, not how many
/// f64 slots the simulator happens to hold.
///
/// [`HeParams::modeled_ciphertext_bytes`]: super::HeParams::modeled_ciphertext_bytes
#[derive(Debug, Default)]
pub struct MemTracker {
    live: AtomicI64,
    peak: AtomicI64,
    created: AtomicU64,
}

impl MemTracker {
    pub(crate) fn register(&self, bytes: u64) {
        let now = self.live.fetch_add(bytes as i64, Ordering::Relaxed) + bytes as i64;
        self.peak.fetch_max(now, Ordering::Relaxed);
        self.created.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn release(&self, bytes: u64) {
        self.live.fetch_sub(bytes as i64, Ordering::Relaxed);
    }

    pub fn live_bytes(&self) -> u64 {
        self.live.load(Ordering::Relaxed).max(0) as u64
    }

    pub fn peak_bytes(&self) -> u64 {
        self.peak.load(Ordering::Relaxed).max(0) as u64
    }

    /// Number of ciphertexts ever materialized (including clones).
    pub fn ciphertexts_created(&self) -> u64 {
        self.created.load(Ordering::Relaxed)
    }

    pub fn reset_peak(&self) {
        self.peak
            .store(self.live.load(Ordering::Relaxed), Ordering::Relaxed);
    }
}
