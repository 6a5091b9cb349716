// SPDX-License-Identifier: MIT OR Apache-2.0

//! Global direct-effect directions estimated from activation differences.
//!
//! Each estimator collects per-sample difference vectors at every layer,
//! pools them into one matrix per layer and keeps the leading principal
//! directions:
//!
//! | family       | difference                                          | rows per sample |
//! |--------------|-----------------------------------------------------|-----------------|
//! | vision       | mean over `m` masked images − clean image           | every vision slot |
//! | text         | hallucinated − original caption, last text token    | 1               |
//! | cross-modal  | black image − null visual embeddings, caption given | every vision slot |

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{black_image, gen_masks, null_visual, CaptionPair, MaskSpec};
use crate::rng::XorShift64Star;
use crate::tensor::{norm, pca_principal_directions, PrincipalDirections, Tensor, DEGENERATE_EIGENVALUE};
use crate::vlm::{ActivationTrace, AttentionMode, Role, ToyVlm, VisionInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Vision,
    Text,
    CrossModal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Vision, Family::Text, Family::CrossModal];

    /// Key used in direction-set files.
    pub fn key(self) -> &'static str {
        match self {
            Family::Vision => "v",
            Family::Text => "t",
            Family::CrossModal => "vt",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Vision => "vision",
            Family::Text => "text",
            Family::CrossModal => "cross-modal",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerDirections {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vt: Option<Vec<f32>>,
}

impl LayerDirections {
    pub fn get(&self, family: Family) -> Option<&[f32]> {
        match family {
            Family::Vision => self.v.as_deref(),
            Family::Text => self.t.as_deref(),
            Family::CrossModal => self.vt.as_deref(),
        }
    }

    fn slot(&mut self, family: Family) -> &mut Option<Vec<f32>> {
        match family {
            Family::Vision => &mut self.v,
            Family::Text => &mut self.t,
            Family::CrossModal => &mut self.vt,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationSeeds {
    pub images: u64,
    pub masks: u64,
    pub captions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionMeta {
    pub n_samples: usize,
    pub masks: usize,
    pub pca_dim: usize,
    pub seeds: EstimationSeeds,
    pub attention_mode: AttentionMode,
    pub model_digest: String,
}

impl Default for DirectionMeta {
    fn default() -> Self {
        Self {
            n_samples: 50,
            masks: 5,
            pca_dim: 1,
            seeds: EstimationSeeds::default(),
            attention_mode: AttentionMode::PrefixBidirectional,
            model_digest: String::new(),
        }
    }
}

/// Per-layer unit steering vectors plus how they were made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub meta: DirectionMeta,
    pub layers: BTreeMap<usize, LayerDirections>,
}

impl DirectionSet {
    pub fn new(meta: DirectionMeta) -> Self {
        Self { meta, layers: BTreeMap::new() }
    }

    pub fn direction(&self, layer: usize, family: Family) -> Option<&[f32]> {
        self.layers.get(&layer).and_then(|l| l.get(family))
    }

    pub fn has_family(&self, family: Family) -> bool {
        self.layers.values().any(|l| l.get(family).is_some())
    }

    /// Stores the steering vectors of `estimate`, replacing that family.
    pub fn insert_estimate(&mut self, estimate: &FamilyEstimate) {
        for l in self.layers.values_mut() {
            *l.slot(estimate.family) = None;
        }
        for (layer, vector) in estimate.steering_vectors() {
            *self.layers.entry(layer).or_default().slot(estimate.family) = Some(vector);
        }
        self.layers.retain(|_, l| Family::ALL.iter().any(|&f| l.get(f).is_some()));
    }

    /// Pretty JSON; floats are written as shortest round-trip f32 decimals.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("direction set serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ds: DirectionSet = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        for (layer, dirs) in &ds.layers {
            for family in Family::ALL {
                if let Some(v) = dirs.get(family) {
                    if (norm(v) - 1.0).abs() > 1e-6 {
                        return Err(Error::Invariant(format!(
                            "layer {layer} {family} direction has norm {}",
                            norm(v)
                        )));
                    }
                }
            }
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Loads a direction set. When `expected_digest` is given and differs
    /// from the stored one, `strict` turns the warning into
    /// [`Error::DigestMismatch`].
    pub fn load(path: impl AsRef<Path>, expected_digest: Option<&str>, strict: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds = Self::from_json_str(&text)?;
        if let Some(expected) = expected_digest {
            if ds.meta.model_digest != expected {
                if strict {
                    return Err(Error::DigestMismatch {
                        expected: ds.meta.model_digest.clone(),
                        found: expected.to_string(),
                    });
                }
                log::warn!(
                    "{}: directions were estimated on model {}, using {expected}",
                    path.display(),
                    ds.meta.model_digest
                );
            }
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimateOptions {
    pub pca_dim: usize,
    /// Also estimate at layer 0 (the embedding sum).
    pub include_embedding_layer: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { pca_dim: 1, include_embedding_layer: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEstimate {
    pub principal: PrincipalDirections,
    /// Column mean of the pooled difference rows (the orientation reference).
    pub mean_difference: Vec<f32>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyEstimate {
    pub family: Family,
    pub n_samples: usize,
    pub layers: BTreeMap<usize, LayerEstimate>,
}

impl FamilyEstimate {
    /// One unit vector per layer.
    ///
    /// With one principal direction this is that direction. With more, it is
    /// the mean difference projected onto their span and renormalized,
    /// falling back to the first direction if the projection vanishes.
    pub fn steering_vectors(&self) -> BTreeMap<usize, Vec<f32>> {
        self.layers
            .iter()
            .map(|(&layer, est)| (layer, steering_vector(est)))
            .collect()
    }
}

fn steering_vector(est: &LayerEstimate) -> Vec<f32> {
    let dirs = &est.principal.directions;
    if dirs.len() == 1 {
        return dirs[0].clone();
    }
    let d = dirs[0].len();
    let mut proj = vec![0.0f64; d];
    for dir in dirs {
        let along: f64 = dir.iter().zip(&est.mean_difference).map(|(&a, &b)| a as f64 * b as f64).sum();
        for (p, &x) in proj.iter_mut().zip(dir) {
            *p += along * x as f64;
        }
    }
    let len = proj.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len <= 1e-12 {
        return dirs[0].clone();
    }
    proj.iter().map(|x| (x / len) as f32).collect()
}

fn estimation_layers(model: &ToyVlm, opts: &EstimateOptions) -> Vec<usize> {
    let start = if opts.include_embedding_layer { 0 } else { 1 };
    (start..=model.config().n_layers).collect()
}

fn record(model: &ToyVlm, vision: VisionInput<'_>, tokens: &[u32]) -> Result<ActivationTrace> {
    let out = model.forward(vision, tokens, &[], None, true)?;
    Ok(out.trace.expect("record = true returns a trace"))
}

fn vision_rows(trace: &ActivationTrace, layer: usize) -> Vec<f32> {
    trace
        .positions(Role::Vision)
        .flat_map(|p| trace.hidden(layer, p).iter().copied())
        .collect()
}

fn check_sample_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

fn caption_tokens(model: &ToyVlm, caption: &str) -> Result<Vec<u32>> {
    let ids = model.tokenizer().tokenize(caption);
    if ids.is_empty() {
        return Err(Error::Shape(format!("caption {caption:?} has no tokens")));
    }
    Ok(ids)
}

/// Pools per-sample difference rows per layer and runs PCA.
///
/// `samples[s][i]` holds sample `s`'s rows (flattened, `d` wide) for
/// `layers[i]`. A layer whose samples are all identical, position by
/// position, is reported as degenerate even if positions differ among
/// themselves: such a layer carries no sample-level effect.
fn reduce(
    family: Family,
    samples: Vec<Vec<Vec<f32>>>,
    layers: &[usize],
    d: usize,
    opts: &EstimateOptions,
) -> Result<FamilyEstimate> {
    let n = samples.len();
    let mut out = BTreeMap::new();
    for (li, &layer) in layers.iter().enumerate() {
        let per_sample = samples[0][li].len();
        if per_sample == 0 || samples.iter().any(|s| s[li].len() != per_sample) {
            return Err(Error::Shape(format!("{family}: uneven difference rows at layer {layer}")));
        }
        let mut between = 0.0f64;
        for j in 0..per_sample {
            let mean = samples.iter().map(|s| s[li][j] as f64).sum::<f64>() / n as f64;
            between += samples.iter().map(|s| (s[li][j] as f64 - mean).powi(2)).sum::<f64>();
        }
        let between = between / ((n - 1) as f64 * (per_sample / d) as f64);
        if between <= DEGENERATE_EIGENVALUE {
            return Err(Error::DegenerateVariance {
                top_eigenvalue: between,
                layer: Some(layer),
            });
        }

        let stacked: Vec<f32> = samples.iter().flat_map(|s| s[li].iter().copied()).collect();
        let rows = stacked.len() / d;
        let matrix = Tensor::new(vec![rows, d], stacked)?;
        let principal = pca_principal_directions(&matrix, opts.pca_dim, None).map_err(|e| match e {
            Error::DegenerateVariance { top_eigenvalue, .. } => Error::DegenerateVariance {
                top_eigenvalue,
                layer: Some(layer),
            },
            other => other,
        })?;
        let mut mean = vec![0.0f64; d];
        for r in 0..rows {
            for (m, &v) in mean.iter_mut().zip(matrix.row(r)) {
                *m += v as f64;
            }
        }
        let mean_difference = mean.iter().map(|m| (m / rows as f64) as f32).collect();
        out.insert(layer, LayerEstimate { principal, mean_difference, rows });
    }
    Ok(FamilyEstimate { family, n_samples: n, layers: out })
}

/// Vision direct effect from masked-image differences.
///
/// Image `i` is masked with seed `derived(masks.seed, i)`, so images get
/// distinct mask layouts while the whole run depends only on `masks.seed`.
pub fn estimate_nde_v(
    model: &ToyVlm,
    images: &[Tensor],
    masks: &MaskSpec,
    opts: &EstimateOptions,
) -> Result<FamilyEstimate> {
    check_sample_count(images.len())?;
    let layers = estimation_layers(model, opts);
    let samples = images
        .par_iter()
        .enumerate()
        .map(|(i, image)| {
            let spec = MaskSpec {
                seed: XorShift64Star::derived(masks.seed, i as u64).next_u64(),
                ..masks.clone()
            };
            let clean = record(model, VisionInput::Image(image), &[])?;
            let masked = gen_masks(image, &spec)?;
            let mut sums: Vec<Vec<f64>> = Vec::new();
            for m in &masked {
                let t = record(model, VisionInput::Image(m), &[])?;
                for (li, &layer) in layers.iter().enumerate() {
                    let rows = vision_rows(&t, layer);
                    if sums.len() <= li {
                        sums.push(vec![0.0; rows.len()]);
                    }
                    for (s, v) in sums[li].iter_mut().zip(rows) {
                        *s += v as f64;
                    }
                }
            }
            let count = masked.len() as f64;
            Ok(layers
                .iter()
                .enumerate()
                .map(|(li, &layer)| {
                    vision_rows(&clean, layer)
                        .iter()
                        .zip(&sums[li])
                        .map(|(&c, &s)| (s / count) as f32 - c)
                        .collect()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<f32>>>>>()?;
    reduce(Family::Vision, samples, &layers, model.config().d_model, opts)
}

/// Text direct effect from hallucinated-caption differences at the last
/// text token (no image).
pub fn estimate_nde_t(model: &ToyVlm, pairs: &[CaptionPair], opts: &EstimateOptions) -> Result<FamilyEstimate> {
    check_sample_count(pairs.len())?;
    let layers = estimation_layers(model, opts);
    let samples = pairs
        .par_iter()
        .map(|pair| {
            let orig = record(model, VisionInput::None, &caption_tokens(model, &pair.original)?)?;
            let hall = record(model, VisionInput::None, &caption_tokens(model, &pair.hallucinated)?)?;
            let (po, ph) = (
                orig.last_text_position().expect("non-empty caption"),
                hall.last_text_position().expect("non-empty caption"),
            );
            Ok(layers
                .iter()
                .map(|&layer| {
                    hall.hidden(layer, ph)
                        .iter()
                        .zip(orig.hidden(layer, po))
                        .map(|(h, o)| h - o)
                        .collect()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<f32>>>>>()?;
    reduce(Family::Text, samples, &layers, model.config().d_model, opts)
}

/// Cross-modal direct effect: black image versus null visual embeddings,
/// each paired with the same caption, compared at the vision slots.
pub fn estimate_nde_vt(model: &ToyVlm, captions: &[String], opts: &EstimateOptions) -> Result<FamilyEstimate> {
    check_sample_count(captions.len())?;
    let cfg = model.config();
    let black = black_image(cfg.image_h, cfg.image_w)?;
    let null = null_visual(cfg)?;
    let layers = estimation_layers(model, opts);
    let samples = captions
        .par_iter()
        .map(|caption| {
            let tokens = caption_tokens(model, caption)?;
            let with_black = record(model, VisionInput::Image(&black), &tokens)?;
            let with_null = record(model, VisionInput::Embeddings(&null), &tokens)?;
            Ok(layers
                .iter()
                .map(|&layer| {
                    vision_rows(&with_black, layer)
                        .iter()
                        .zip(vision_rows(&with_null, layer))
                        .map(|(b, n)| b - n)
                        .collect()
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<f32>>>>>()?;
    reduce(Family::CrossModal, samples, &layers, cfg.d_model, opts)
}
