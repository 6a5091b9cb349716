// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Everything that can go wrong inside the toolkit.
///
/// Variants are grouped by the exit-code class the CLI maps them to:
/// data/format problems, network problems, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("degenerate variance: top eigenvalue {top_eigenvalue:e} is not above 1e-12{}", layer_suffix(*.layer))]
    DegenerateVariance {
        top_eigenvalue: f64,
        layer: Option<usize>,
    },

    #[error("zero-length vector")]
    ZeroVector,

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("sequence length {len} exceeds max_seq {max_seq}")]
    Overflow { len: usize, max_seq: usize },

    #[error("lexicon has no usable swap or phantom entry")]
    EmptyLexicon,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("model digest mismatch: directions built for {expected}, model is {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("counterfactual contrasts require noise_sigma = 0 (got {0})")]
    Noise(f64),

    #[error("cross-modal contrast requires a null visual input")]
    MissingNull,

    #[error("image {image_id} has {available} {kind} candidates, {needed} needed")]
    InsufficientObjects {
        image_id: String,
        kind: &'static str,
        available: usize,
        needed: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("value {value} outside [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },

    #[error("network error: {0}")]
    Network(String),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn layer_suffix(layer: Option<usize>) -> String {
    layer.map(|l| format!(" (layer {l})")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures talking to an external endpoint.
    pub fn is_network(&self) -> bool {
        matches!(
            self,
            Error::Network(_) | Error::Timeout(_) | Error::Protocol(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
