//! Flow-level app fingerprinting over padded TCP traffic.
//!
//! The pipeline goes: PCAP ingestion → TCP session assembly → timed flow
//! splitting → 68-dimensional feature extraction → standardization →
//! multi-class classification → per-class and overall evaluation. A synthetic
//! trace generator with connection-padding semantics produces labeled corpora
//! so the whole pipeline can be exercised without live captures.
//!
//! Modules follow the pipeline stages:
//! - [`trace`]: classic-PCAP reader/writer and session assembly
//! - [`flow`]: fixed-duration flow splitting and labeling
//! - [`features`]: the 68-dim feature layout plus standardization
//! - [`learn`]: k-NN, random forest, and linear one-vs-rest SVM classifiers
//! - [`metrics`]: confusion matrices, per-class and overall metrics, reports
//! - [`synth`]: archetype-driven trace generation with connection padding
//! - [`pipeline`]: experiment orchestration (extract, cross-validate, grid)

pub mod error;
pub mod features;
pub mod flow;
pub mod learn;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod trace;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Derives a decorrelated sub-seed for a numbered random stream (per tree,
/// per class, per session, …) from a base seed.
///
/// One SplitMix64 step over `base ⊕ f(stream)`; nearby stream numbers yield
/// unrelated seeds, and the mapping is stable across releases because
/// recorded seeds must keep reproducing published runs.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
