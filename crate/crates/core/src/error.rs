//! Error type shared across the pipeline.

use thiserror::Error;

/// Everything that can go wrong between a capture file and a report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("unsupported capture format: magic 0x{0:08X}")]
    BadMagic(u32),

    #[error("unsupported link type {0} (supported: 1 ethernet, 101 raw-ip, 113 linux-sll)")]
    UnsupportedLinkType(u32),

    #[error("truncated capture record at byte offset {offset}")]
    Truncated { offset: u64 },

    #[error("packets must be time-ordered")]
    UnorderedPackets,

    #[error("packet size {0} below the 40-byte ip+tcp minimum")]
    UndersizedPacket(u16),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label must be non-empty")]
    EmptyLabel,

    #[error("flow already labeled {existing:?}, refusing relabel to {requested:?}")]
    LabelConflict { existing: String, requested: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("vector has no label")]
    UnlabeledVector,

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("length mismatch: {truths} truths vs {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {class:?} has {members} members, fewer than {k} folds")]
    ClassTooSmall {
        class: String,
        members: usize,
        k: usize,
    },

    #[error("training requires at least two classes")]
    SingleClass,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("padding mode none has no timeout to sample")]
    PaddingModeNone,

    #[error("class {0:?} produced zero flows")]
    ClassWithoutFlows(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
