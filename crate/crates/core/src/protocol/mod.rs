//! Three-party protocol: message transport, owner services and the
//! evaluator's interactive sessions.

mod chunk;
mod owners;
mod pipeline;
mod session;
mod transport;

pub use chunk::{EncryptedChunk, EncryptedRecord};
pub use owners::{Owners, MASK_SPAN};
pub use pipeline::{
    naive_full_psi, owner_scheme, prepare, run_pipeline, run_prepared, run_with_transport, PipelineConfig, RunOutput, RunStats, Variant,
    DEFAULT_XI_EXACT, DEFAULT_XI_LEVELED, ROUNDING_LIMIT,
};
pub use session::{InteractiveSession, MAX_POOL_FETCH};
pub use transport::{EdgeCounters, Message, Tap, Transport};
