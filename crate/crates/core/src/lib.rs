//! Dynamic true/false probe generation from knowledge-base triplets.
//!
//! Each triplet is lifted to a predicate, expanded into eight equivalent or
//! negated variants, and rendered through hand-written prototypes into test
//! statements with known gold labels. Models are then scored per statement and
//! per knowledge point (all statements correct).
//!
//! Modules follow the pipeline: [`kb`] → [`predicate`] → [`textgen`] →
//! [`harness`] → [`metrics`], with [`pipeline`] tying them to files on disk.

pub mod cache;
pub mod client;
pub mod config;
pub mod harness;
pub mod kb;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod predicate;
pub mod textgen;

use sha2::{Digest, Sha256};

pub use config::RunConfig;
pub use harness::{extract_answer, Answer, EvalModel, MockModel};
pub use kb::{Entity, KnowledgeTriplet, Polarity};
pub use matrix::ScoreMatrix;
pub use metrics::MetricsReport;
pub use predicate::{label_for, Label, TransformKey};
pub use textgen::{Generator, PrototypePool, TestSample};

/// Lowercase hex SHA-256.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives a per-item RNG seed from a run seed and a stable identifier.
pub fn seed_for(seed: u64, id: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}\u{0}{id}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
