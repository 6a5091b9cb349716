// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// How prompt positions see each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Vision and prompt text attend to each other freely; generated tokens
    /// attend causally.
    #[default]
    PrefixBidirectional,
    /// Strict left-to-right everywhere.
    FullyCausal,
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionMode::PrefixBidirectional => "prefix_bidirectional",
            AttentionMode::FullyCausal => "fully_causal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyVlmConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab: Vec<String>,
    pub image_h: usize,
    pub image_w: usize,
    pub patch: usize,
    pub max_seq: usize,
    #[serde(default)]
    pub attention_mode: AttentionMode,
    pub seed: u64,
}

impl Default for ToyVlmConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_layers: 4,
            n_heads: 4,
            vocab: default_vocab(),
            image_h: 8,
            image_w: 8,
            patch: 2,
            max_seq: 64,
            attention_mode: AttentionMode::PrefixBidirectional,
            seed: 0,
        }
    }
}

impl ToyVlmConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return fail("d_model, n_layers and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.patch == 0 || self.image_h == 0 || self.image_w == 0 {
            return fail("image dims and patch must be positive".into());
        }
        if self.image_h % self.patch != 0 || self.image_w % self.patch != 0 {
            return fail(format!(
                "patch {} does not divide image {}×{}",
                self.patch, self.image_h, self.image_w
            ));
        }
        let mut seen = HashSet::new();
        for word in &self.vocab {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return fail(format!("vocab entry {word:?} is empty or contains whitespace"));
            }
            if !seen.insert(word.as_str()) {
                return fail(format!("vocab entry {word:?} appears more than once"));
            }
        }
        for reserved in [UNK, BOS, EOS] {
            if !seen.contains(reserved) {
                return fail(format!("vocab is missing reserved token {reserved}"));
            }
        }
        if self.max_seq <= self.n_patches() {
            return fail(format!(
                "max_seq {} leaves no room for text after {} vision tokens",
                self.max_seq,
                self.n_patches()
            ));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        if self.patch == 0 {
            return 0;
        }
        (self.image_h / self.patch) * (self.image_w / self.patch)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Hidden width of the MLP.
    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, word: &str) -> Option<u32> {
        self.vocab.iter().position(|w| w == word).map(|i| i as u32)
    }
}

/// Nouns the toy model knows as "objects".
pub fn default_objects() -> Vec<&'static str> {
    vec![
        "dog", "cat", "person", "man", "woman", "car", "bus", "truck", "bicycle", "horse", "bird",
        "sheep", "cow", "table", "chair", "couch", "bed", "fork", "knife", "spoon", "cup",
        "bottle", "bowl", "umbrella", "bench", "tree", "boat", "kite", "ball", "clock", "laptop",
        "phone", "book", "vase", "pizza", "cake", "sandwich", "banana", "apple", "oven", "sink",
        "tv",
    ]
}

/// Reserved tokens, answer words, function words, scenes, colours and objects.
pub fn default_vocab() -> Vec<String> {
    let fixed = [
        UNK, BOS, EOS, "yes", "no", "is", "are", "there", "a", "an", "the", "in", "on", "with",
        "of", "and", "near", "under", "next", "to", "by", "image", "picture", "photo", "sitting",
        "standing", "lying", "holding", "some", "two", "three", "red", "blue", "green", "white",
        "black", "brown", "small", "large", "sky", "grass", "road", "water", "room", "street",
        "field", "beach", "kitchen", "park",
    ];
    fixed
        .iter()
        .copied()
        .chain(default_objects())
        .map(str::to_string)
        .collect()
}
