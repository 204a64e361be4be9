//! Tools for measuring whether mixture-of-experts routers track meaning.
//!
//! The crate ingests per-token routing traces, pairs them up according to two
//! controlled protocols (same vs. different word sense; equivalent vs.
//! different substitute), scores expert overlap against the chance baseline
//! `k²/N`, and tests the condition difference for significance. A seeded
//! router simulator provides ground-truth corpora, and a sparse autoencoder
//! over pre-router activations links learned features to expert usage.

pub mod error;
pub mod experiments;
pub mod overlap;
pub mod sae;
pub mod stats;
pub mod synthetic;
pub mod trace_model;

pub use error::{Error, Result};
