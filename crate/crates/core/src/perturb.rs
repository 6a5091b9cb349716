// SPDX-License-Identifier: MIT OR Apache-2.0

//! Treated inputs for the direct-effect estimators: block masks, the black
//! and null visual conditions, and hallucinated caption pairs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor;
use crate::vlm::{default_objects, ToyVlmConfig};

/// Random square-block masking. Masked pixels are set to 0.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Number of masked copies per image.
    pub m: usize,
    /// Minimum masked-area fraction, in `(0, 1]`.
    pub fraction: f64,
    /// Block side in pixels.
    pub block: usize,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self { m: 5, fraction: 0.25, block: 2, seed: 0 }
    }
}

impl MaskSpec {
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("mask count m must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("mask fraction {} not in (0, 1]", self.fraction)));
        }
        if self.block == 0 || h % self.block != 0 || w % self.block != 0 {
            return Err(Error::Config(format!(
                "block {} does not tile a {h}×{w} image",
                self.block
            )));
        }
        Ok(())
    }

    /// Blocks each mask zeroes: the smallest count reaching `fraction`.
    pub fn blocks_per_mask(&self, h: usize, w: usize) -> usize {
        let total = (h / self.block) * (w / self.block);
        // The small slack absorbs products like 0.3 · 10 = 3.0000000000000004.
        (((self.fraction * total as f64) - 1e-9).ceil() as usize).clamp(1, total)
    }
}

/// Block indices (raster order over the block grid) zeroed by each of the `m` masks.
pub fn gen_mask_blocks(h: usize, w: usize, spec: &MaskSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate(h, w)?;
    let total = (h / spec.block) * (w / spec.block);
    let k = spec.blocks_per_mask(h, w);
    Ok((0..spec.m)
        .map(|j| XorShift64Star::derived(spec.seed, j as u64).choose_indices(total, k))
        .collect())
}

/// `m` masked copies of `image` (`[H × W]`).
pub fn gen_masks(image: &Tensor, spec: &MaskSpec) -> Result<Vec<Tensor>> {
    let (h, w) = match image.dims() {
        &[h, w] => (h, w),
        d => return Err(Error::Shape(format!("image must be [H, W], got {d:?}"))),
    };
    let grid_w = w / spec.block.max(1);
    gen_mask_blocks(h, w, spec)?
        .into_iter()
        .map(|blocks| {
            let mut data = image.data().to_vec();
            for b in blocks {
                let (by, bx) = (b / grid_w, b % grid_w);
                for y in by * spec.block..(by + 1) * spec.block {
                    let row = y * w;
                    data[row + bx * spec.block..row + (bx + 1) * spec.block].fill(0.0);
                }
            }
            Tensor::new(vec![h, w], data)
        })
        .collect()
}

/// All-zero `[h × w]` image.
pub fn black_image(h: usize, w: usize) -> Result<Tensor> {
    Tensor::zeros(vec![h, w])
}

/// Zero embeddings for every vision slot, bypassing the patch encoder.
pub fn null_visual(config: &ToyVlmConfig) -> Result<Tensor> {
    Tensor::zeros(vec![config.n_patches(), config.d_model])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    File,
    Rule,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub original: String,
    pub hallucinated: String,
    pub source: CaptionSource,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CaptionPair {
    /// Rejects pairs whose two sides are equal up to whitespace.
    pub fn new(original: &str, hallucinated: &str, source: CaptionSource) -> Result<Self> {
        if normalize(original).is_empty() {
            return Err(Error::Invariant("original caption is empty".into()));
        }
        if normalize(original) == normalize(hallucinated) {
            return Err(Error::Invariant(format!(
                "hallucinated caption equals the original ({original:?})"
            )));
        }
        Ok(Self {
            original: original.to_string(),
            hallucinated: hallucinated.to_string(),
            source,
        })
    }
}

/// Word swaps and phantom phrases for the rule-based hallucinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationLexicon {
    pub swaps: BTreeMap<String, String>,
    pub phantoms: Vec<String>,
}

impl Default for HallucinationLexicon {
    fn default() -> Self {
        let swaps = [
            ("dog", "cat"),
            ("cat", "dog"),
            ("car", "bus"),
            ("bus", "truck"),
            ("truck", "car"),
            ("fork", "spoon"),
            ("knife", "fork"),
            ("cup", "bottle"),
            ("bottle", "vase"),
            ("horse", "cow"),
            ("sheep", "horse"),
            ("table", "bench"),
            ("chair", "couch"),
            ("man", "woman"),
            ("woman", "man"),
            ("pizza", "cake"),
            ("banana", "apple"),
            ("laptop", "book"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let phantoms = [
            "with a red umbrella",
            "next to a bicycle",
            "near a small boat",
            "with a kite in the sky",
            "by a white clock",
        ]
        .into_iter()
        .map(str::to_string)
        .collect();
        Self { swaps, phantoms }
    }
}

impl HallucinationLexicon {
    /// Checks that no word maps to itself and every word is in `vocab`.
    pub fn validate(&self, vocab: &[String]) -> Result<()> {
        let known = |w: &str| vocab.iter().any(|v| v == w);
        for (from, to) in &self.swaps {
            if from == to {
                return Err(Error::Config(format!("lexicon maps {from:?} to itself")));
            }
            for w in [from, to] {
                if !known(w) {
                    return Err(Error::Config(format!("lexicon word {w:?} not in vocab")));
                }
            }
        }
        for phrase in &self.phantoms {
            if phrase.split_whitespace().next().is_none() {
                return Err(Error::Config("empty phantom phrase".into()));
            }
            if let Some(w) = phrase.split_whitespace().find(|w| !known(w)) {
                return Err(Error::Config(format!("phantom word {w:?} not in vocab")));
            }
        }
        Ok(())
    }

    /// Object words this lexicon can inject: swap targets and objects named
    /// in phantom phrases.
    pub fn injected_objects(&self) -> Vec<String> {
        let objects = default_objects();
        let mut out: Vec<String> = self
            .swaps
            .values()
            .cloned()
            .chain(
                self.phantoms
                    .iter()
                    .flat_map(|p| p.split_whitespace())
                    .filter(|w| objects.contains(w))
                    .map(str::to_string),
            )
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Swaps the first lexicon word found in `caption`; with no match, appends
/// the phantom phrase picked by `seed`. The result always differs from the
/// input.
pub fn hallucinate_caption_rule(caption: &str, lexicon: &HallucinationLexicon, seed: u64) -> Result<String> {
    let mut words: Vec<&str> = caption.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Invariant("cannot hallucinate an empty caption".into()));
    }
    if let Some(i) = words.iter().position(|w| lexicon.swaps.contains_key(*w)) {
        words[i] = &lexicon.swaps[words[i]];
        return Ok(words.join(" "));
    }
    let phrases: Vec<&String> = lexicon
        .phantoms
        .iter()
        .filter(|p| p.split_whitespace().next().is_some())
        .collect();
    if phrases.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let phrase = phrases[XorShift64Star::new(seed).below(phrases.len())];
    Ok(format!("{} {}", words.join(" "), normalize(phrase)))
}

/// A caption-pair file line that parsed but broke a pair invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CaptionLoad {
    pub pairs: Vec<CaptionPair>,
    pub rejected: Vec<RejectedLine>,
}

/// Reads a JSONL file of `{"original": .., "hallucinated": ..}` records.
///
/// Blank lines are skipped. Malformed lines abort with
/// [`Error::Parse`]; pairs breaking the invariants are collected in
/// [`CaptionLoad::rejected`].
pub fn load_caption_pairs(path: impl AsRef<Path>) -> Result<CaptionLoad> {
    #[derive(Deserialize)]
    struct Record {
        original: String,
        hallucinated: String,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut load = CaptionLoad::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match CaptionPair::new(&rec.original, &rec.hallucinated, CaptionSource::File) {
            Ok(pair) => load.pairs.push(pair),
            Err(e) => {
                log::warn!("{}:{line_no}: {e}", path.display());
                load.rejected.push(RejectedLine { line: line_no, reason: e.to_string() });
            }
        }
    }
    Ok(load)
}

/// Asks an external generator for a hallucinated version of `caption`.
///
/// Wire protocol: POST `{"caption": str}`, expecting status 200 and
/// `{"hallucinated": str}`.
pub fn request_external_hallucination(endpoint: &str, caption: &str, timeout: Duration) -> Result<CaptionPair> {
    #[derive(Serialize)]
    struct Request<'a> {
        caption: &'a str,
    }
    #[derive(Deserialize)]
    struct Response {
        hallucinated: String,
    }
    let resp: Response = crate::http::post_json(endpoint, &Request { caption }, timeout)?;
    CaptionPair::new(caption, &resp.hallucinated, CaptionSource::External)
}
