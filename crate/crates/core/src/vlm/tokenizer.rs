// SPDX-License-Identifier: MIT OR Apache-2.0

//! Whitespace tokenizer over a fixed vocabulary.

use std::collections::HashMap;

use super::config::{BOS, EOS, UNK};

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    bos: u32,
    eos: u32,
}

impl Tokenizer {
    /// The vocabulary must already contain the reserved tokens (see
    /// [`ToyVlmConfig::validate`](super::ToyVlmConfig::validate)).
    pub fn new(vocab: &[String]) -> Self {
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let id = |w: &str| index.get(w).copied().unwrap_or(0);
        Self {
            unk: id(UNK),
            bos: id(BOS),
            eos: id(EOS),
            vocab: vocab.to_vec(),
            index,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(self.unk))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.vocab.get(id as usize).map(String::as_str).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::default_vocab;
    use proptest::prelude::*;

    #[test]
    fn known_words_roundtrip() {
        let t = Tokenizer::new(&default_vocab());
        let ids = t.tokenize("is there a dog");
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|&i| i != t.unk()));
        assert_eq!(t.detokenize(&ids), "is there a dog");
    }

    #[test]
    fn unknown_and_empty() {
        let t = Tokenizer::new(&default_vocab());
        assert_eq!(t.tokenize("qwzx"), vec![t.unk()]);
        assert!(t.tokenize("").is_empty());
        assert_eq!(t.detokenize(&[]), "");
    }

    proptest! {
        #[test]
        fn roundtrip_normalizes_whitespace(words in prop::collection::vec(0usize..40, 0..12), sep in "[ \t\n]{1,3}") {
            let vocab = default_vocab();
            let t = Tokenizer::new(&vocab);
            let chosen: Vec<&str> = words.iter().map(|&i| vocab[i + 3].as_str()).collect();
            let text = chosen.join(&sep);
            prop_assert_eq!(t.detokenize(&t.tokenize(&text)), chosen.join(" "));
        }
    }
}
