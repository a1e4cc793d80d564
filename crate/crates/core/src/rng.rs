//! Deterministic, labelled random streams.
//!
//! Every stream is a ChaCha generator keyed by `SHA-256(seed || label)`, so
//! streams with different labels are independent and a child stream never
//! depends on how many draws its parent has made. Ensemble members and
//! replicates derive their own labels and can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha12Rng;

/// Random stream for `(seed, label)`.
pub fn seeded_rng(seed: u64, stream_label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((stream_label.len() as u64).to_le_bytes());
    hasher.update(stream_label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Stream::from_seed(key)
}

/// Label for a child stream, e.g. `child_label("sweep", "rep-3")`.
pub fn child_label(parent: &str, child: impl std::fmt::Display) -> String {
    format!("{parent}/{child}")
}

/// A `(seed, label)` pair naming a stream, cheap to pass around and split.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub label: String,
}

impl StreamKey {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        StreamKey { seed, label: label.into() }
    }

    pub fn rng(&self) -> Stream {
        seeded_rng(self.seed, &self.label)
    }

    pub fn child(&self, child: impl std::fmt::Display) -> StreamKey {
        StreamKey { seed: self.seed, label: child_label(&self.label, child) }
    }
}
