// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small, deterministic vision-language transformer.

mod checkpoint;
mod config;
mod model;
mod tokenizer;

pub use checkpoint::{load_image, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{default_objects, default_vocab, AttentionMode, ToyVlmConfig, BOS, EOS, UNK};
pub use model::{argmax_lowest, ActivationTrace, Block, ForwardOutput, Role, ToyVlm, VisionInput, Weights};
pub use tokenizer::Tokenizer;
