// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: a JSON file whose fields are overridden by flags.

use std::path::{Path, PathBuf};

use ndesteer::eval::{Strategy, DEFAULT_HALLUCINATION_THRESHOLD};
use ndesteer::{InterventionConfig, LayerSelection};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every knob a subcommand may read. All fields are optional so a file can
/// set any subset; [`RunConfig::defaults`] fills the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<LayerSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_digest: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_images: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_new: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stub_judge: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        RunConfig { $($f: $hi.$f.or($lo.$f),)* }
    };
}

impl RunConfig {
    pub fn defaults() -> Self {
        let iv = InterventionConfig::default();
        let meta = ndesteer::DirectionMeta::default();
        Self {
            a: Some(iv.a),
            b: Some(iv.b),
            c: Some(iv.c),
            layers: Some(iv.layers),
            strict_digest: Some(iv.strict_digest),
            pca_dim: Some(meta.pca_dim),
            n_samples: Some(meta.n_samples),
            masks: Some(meta.masks),
            seed: Some(0),
            strategy: Some(Strategy::Random),
            k: Some(1),
            n_images: Some(10),
            max_new: Some(8),
            stub_judge: Some(false),
            timeout_ms: Some(10_000),
            threshold: Some(DEFAULT_HALLUCINATION_THRESHOLD),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| ndesteer::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Core(ndesteer::Error::Parse {
                line: e.line(),
                message: format!("{}: {e}", path.display()),
            })
        })
    }

    /// Fields of `self` win; gaps come from `lower`.
    pub fn over(self, lower: RunConfig) -> RunConfig {
        overlay!(
            self, lower, model, directions, a, b, c, layers, strict_digest, pca_dim, n_samples, masks, seed,
            strategy, k, n_images, max_new, judge_endpoint, stub_judge, timeout_ms, threshold, out
        )
    }

    pub fn intervention(&self) -> InterventionConfig {
        InterventionConfig {
            a: self.a.unwrap_or(0.9),
            b: self.b.unwrap_or(0.9),
            c: self.c.unwrap_or(0.9),
            layers: self.layers.clone().unwrap_or_default(),
            strict_digest: self.strict_digest.unwrap_or(false),
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Unwraps a required option or reports which flag is missing.
pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing required option {flag}")))
}
