// SPDX-License-Identifier: MIT OR Apache-2.0

//! Direct-effect steering for a toy vision-language transformer.
//!
//! The pipeline: perturb inputs ([`perturb`]), collect representation
//! differences and reduce them to unit directions ([`nde`]), add the scaled
//! directions to hidden states at test time ([`intervene`]), and check the
//! pieces against exact ground truth ([`scg`]) and evaluation metrics
//! ([`eval`]).

pub mod corpus;
pub mod error;
pub mod eval;
mod http;
pub mod intervene;
pub mod nde;
pub mod perturb;
pub mod rng;
pub mod scg;
pub mod tensor;
pub mod vlm;

pub use error::{Error, Result};
pub use intervene::{apply_intervention, validate_config, Intervention, InterventionConfig, LayerSelection};
pub use nde::{
    estimate_nde_t, estimate_nde_v, estimate_nde_vt, DirectionMeta, DirectionSet, EstimateOptions, Family,
    FamilyEstimate,
};
pub use perturb::{CaptionPair, CaptionSource, HallucinationLexicon, MaskSpec};
pub use rng::XorShift64Star;
pub use scg::{gen_planted_model, oracle_nde, simulate_outcome, NdeKind, PlantSpec, PlantedModel, ScgSpec};
pub use tensor::Tensor;
pub use vlm::{AttentionMode, ToyVlm, ToyVlmConfig};
