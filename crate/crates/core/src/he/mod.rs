//! Simulated SIMD homomorphic-vector backend.
//!
//! Two interchangeable simulators sit behind one API: `exact` keeps slot
//! arithmetic exact, `leveled` injects Gaussian noise per operation. Both
//! enforce the multiplicative depth budget, collective decryption and key
//! separation.

mod cipher;
mod keys;
mod memory;
mod ops;
mod params;
mod wire;

pub use cipher::{CipherVec, PlainVec};
pub use keys::{keygen, KeyMaterial, PartyId, PublicKey, SecretShare};
pub(crate) use keys::{Reader, KEY_VERSION};
pub use memory::MemTracker;
pub use params::{Backend, HeParams, SECURITY_LEVELS};
pub use wire::CIPHER_HEADER_BYTES;
