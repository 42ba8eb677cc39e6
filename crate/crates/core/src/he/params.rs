use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which simulator executes the slot arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact f64 slot arithmetic, no injected noise.
    #[default]
    Exact,
    /// Depth-budgeted arithmetic with Gaussian noise injected per operation.
    Leveled,
}

impl Backend {
    pub fn tag(self) -> u8 {
        match self {
            Backend::Exact => 0,
            Backend::Leveled => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Backend::Exact),
            1 => Some(Backend::Leveled),
            _ => None,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "leveled" => Ok(Backend::Leveled),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

pub const SECURITY_LEVELS: &[&str] = &[
    "HEStd_128_classic",
    "HEStd_192_classic",
    "HEStd_256_classic",
    "HEStd_NotSet",
];

/// CKKS-style parameter set.
///
/// Only `multiplicative_depth`, `batch_size`, `bootstrapping_enabled`,
/// `refresh_depth`, `noise_sigma` and `backend` influence the simulated
/// arithmetic. The remaining fields are carried and validated so that a
/// configuration can later be handed to a real HE library unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeParams {
    pub multiplicative_depth: u32,
    pub scale_factor_bits: u32,
    pub batch_size: usize,
    pub num_large_digits: u32,
    pub first_mod_size: u32,
    pub security_level: String,
    pub bootstrapping_enabled: bool,
    /// Levels available right after a bootstrap. `None` resolves to
    /// `multiplicative_depth - 3` when bootstrapping is on.
    pub refresh_depth: Option<u32>,
    pub noise_sigma: f64,
    pub backend: Backend,
    /// Interactive bootstrapping compression level. Passthrough only.
    pub bootstrap_compression: String,
}

impl Default for HeParams {
    fn default() -> Self {
        Self {
            multiplicative_depth: 2,
            scale_factor_bits: 50,
            batch_size: 128,
            num_large_digits: 1,
            first_mod_size: 60,
            security_level: "HEStd_128_classic".to_string(),
            bootstrapping_enabled: false,
            refresh_depth: None,
            noise_sigma: 0.0,
            backend: Backend::Exact,
            bootstrap_compression: "n/a".to_string(),
        }
    }
}

impl HeParams {
    /// The parameter set used by the non-interactive pipeline: depth 12 with
    /// bootstrapping.
    pub fn bootstrapped() -> Self {
        Self {
            multiplicative_depth: 12,
            bootstrapping_enabled: true,
            bootstrap_compression: "COMPACT".to_string(),
            ..Self::default()
        }
    }

    pub fn with_backend(mut self, backend: Backend, noise_sigma: f64) -> Self {
        self.backend = backend;
        self.noise_sigma = noise_sigma;
        self
    }

    pub fn refresh_levels(&self) -> u32 {
        match self.refresh_depth {
            Some(r) => r,
            None if self.bootstrapping_enabled => {
                self.multiplicative_depth.saturating_sub(3).max(1)
            }
            None => self.multiplicative_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.multiplicative_depth == 0 {
            return bad("multiplicative_depth must be positive".into());
        }
        if self.batch_size < 2 || !self.batch_size.is_power_of_two() {
            return bad(format!(
                "batch_size must be a power of two, got {}",
                self.batch_size
            ));
        }
        if self.scale_factor_bits == 0 || self.first_mod_size == 0 {
            return bad("scale_factor_bits and first_mod_size must be positive".into());
        }
        if self.scale_factor_bits >= self.first_mod_size {
            return bad(format!(
                "scale_factor_bits ({}) must be below first_mod_size ({})",
                self.scale_factor_bits, self.first_mod_size
            ));
        }
        if self.first_mod_size > 64 {
            return bad(format!(
                "first_mod_size {} exceeds a machine word",
                self.first_mod_size
            ));
        }
        if self.num_large_digits == 0 {
            return bad("num_large_digits must be positive".into());
        }
        if !SECURITY_LEVELS.contains(&self.security_level.as_str()) {
            return bad(format!("unknown security level `{}`", self.security_level));
        }
        let refresh = self.refresh_levels();
        if refresh == 0 || refresh > self.multiplicative_depth {
            return bad(format!(
                "refresh_depth {refresh} must lie in 1..={}",
                self.multiplicative_depth
            ));
        }
        if self.bootstrapping_enabled && refresh < 3 {
            return bad(format!(
                "bootstrapping needs refresh_depth >= 3, got {refresh}"
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    /// Ring dimension of the modeled CKKS instance (slots = ring / 2).
    pub fn ring_dimension(&self) -> usize {
        self.batch_size * 2
    }

    /// Modeled serialized size of one ciphertext with `levels_left` levels
    /// remaining: two ring elements, one RNS limb per remaining level plus
    /// the base limb, 8 bytes per coefficient.
    pub fn modeled_ciphertext_bytes(&self, levels_left: u32) -> u64 {
        2 * self.ring_dimension() as u64 * (u64::from(levels_left) + 1) * 8
    }

    /// Modeled key-material size: relinearization key plus one rotation key
    /// per power-of-two step; bootstrapping adds the linear-transform
    /// rotation keys. Each switching key holds `num_large_digits` pairs of
    /// ring elements over all limbs plus one special limb.
    pub fn modeled_key_bytes(&self) -> u64 {
        let log_slots = self.batch_size.trailing_zeros() as u64;
        let mut switching_keys = 1 + log_slots;
        if self.bootstrapping_enabled {
            switching_keys += 2 * log_slots + 2;
        }
        let limbs = u64::from(self.multiplicative_depth) + 2;
        let per_key = u64::from(self.num_large_digits) * 2 * self.ring_dimension() as u64 * limbs * 8;
        let secret = self.ring_dimension() as u64 * limbs * 8;
        switching_keys * per_key + secret
    }
}
