// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ground truth for the estimators.
//!
//! [`ScgSpec`] is a linear structural causal model over text `t`, vision `v`
//! and fusion `F(t, v)`:
//!
//! ```text
//! A = alpha_t · t + beta_v · v + gamma_f · F(t, v) + ε
//! ```
//!
//! [`oracle_nde`] evaluates the three direct-effect contrasts on it. The
//! contrasts re-evaluate `F` under the treated input in every term, which is
//! closer to a total effect than to the textbook natural direct effect.
//!
//! [`gen_planted_model`] builds toy VLMs whose perturbation response is
//! known to lie along a chosen unit vector.

use serde::{Deserialize, Serialize};

use crate::corpus::{caption_for, object_list, synthetic_annotations, synthetic_caption_pairs, synthetic_images};
use crate::error::{Error, Result};
use crate::nde::{estimate_nde_t, estimate_nde_v, estimate_nde_vt, EstimateOptions, Family};
use crate::perturb::{HallucinationLexicon, MaskSpec};
use crate::rng::XorShift64Star;
use crate::tensor::{cosine_similarity, norm, Tensor};
use crate::vlm::{ToyVlm, ToyVlmConfig, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `F(t, v) = t + v`
    #[default]
    Sum,
    /// `F(t, v) = t · v` (elementwise)
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgSpec {
    pub alpha_t: f64,
    pub beta_v: f64,
    pub gamma_f: f64,
    #[serde(default)]
    pub fusion: Fusion,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScgSpec {
    fn default() -> Self {
        Self {
            alpha_t: 1.0,
            beta_v: 1.0,
            gamma_f: 1.0,
            fusion: Fusion::Sum,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl ScgSpec {
    fn validate(&self) -> Result<()> {
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }

    fn fuse(&self, t: f64, v: f64) -> f64 {
        match self.fusion {
            Fusion::Sum => t + v,
            Fusion::Product => t * v,
        }
    }

    /// Noise-free outcome `Y(t, v, F(t, v))`.
    fn structural(&self, t: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if t.len() != v.len() || t.is_empty() {
            return Err(Error::Shape(format!("t has dim {}, v has dim {}", t.len(), v.len())));
        }
        Ok(t.iter()
            .zip(v)
            .map(|(&ti, &vi)| self.alpha_t * ti + self.beta_v * vi + self.gamma_f * self.fuse(ti, vi))
            .collect())
    }
}

/// Outcome with noise. `noise_draw` overrides the seeded Gaussian draw.
pub fn simulate_outcome(spec: &ScgSpec, t: &[f64], v: &[f64], noise_draw: Option<&[f64]>) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = spec.structural(t, v)?;
    match noise_draw {
        Some(eps) => {
            if eps.len() != out.len() {
                return Err(Error::Shape(format!("noise of dim {} for outcome dim {}", eps.len(), out.len())));
            }
            out.iter_mut().zip(eps).for_each(|(a, e)| *a += e);
        }
        None if spec.noise_sigma > 0.0 => {
            let mut rng = XorShift64Star::new(spec.seed);
            out.iter_mut().for_each(|a| *a += spec.noise_sigma * rng.normal());
        }
        None => {}
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NdeKind {
    /// `Y(t, v) − Y(t, v*)`
    V,
    /// `Y(t, v) − Y(t*, v)`
    T,
    /// `Y(t, v*) − Y(t, v_null)`
    VT,
}

/// Exact counterfactual contrast. `treated` is `v*` for `V` and `VT`, `t*` for `T`.
pub fn oracle_nde(
    spec: &ScgSpec,
    kind: NdeKind,
    t: &[f64],
    v: &[f64],
    treated: &[f64],
    null_v: Option<&[f64]>,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.noise_sigma > 0.0 {
        return Err(Error::Noise(spec.noise_sigma));
    }
    let (lhs, rhs) = match kind {
        NdeKind::V => (spec.structural(t, v)?, spec.structural(t, treated)?),
        NdeKind::T => (spec.structural(t, v)?, spec.structural(treated, v)?),
        NdeKind::VT => {
            let null = null_v.ok_or(Error::MissingNull)?;
            (spec.structural(t, treated)?, spec.structural(t, null)?)
        }
    };
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect())
}

/// Scalar convenience over [`oracle_nde`].
pub fn oracle_nde_scalar(
    spec: &ScgSpec,
    kind: NdeKind,
    t: f64,
    v: f64,
    treated: f64,
    null_v: Option<f64>,
) -> Result<f64> {
    let null = null_v.map(|n| [n]);
    Ok(oracle_nde(spec, kind, &[t], &[v], &[treated], null.as_ref().map(|n| &n[..]))?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub family: Family,
    /// Unit vector of dim `d_model`.
    pub direction: Vec<f32>,
    pub strength: f32,
    /// Norm of the off-direction leakage relative to the planted response.
    pub noise_sigma: f32,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub model: ToyVlm,
    pub family: Family,
    pub direction: Vec<f32>,
    /// Layer the planting is documented for; with pass-through blocks after
    /// the mixer it holds at every layer `>= 1`.
    pub designated_layer: usize,
}

fn normal_tensor(rng: &mut XorShift64Star, dims: Vec<usize>, scale: f64) -> Result<Tensor> {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| (rng.normal() * scale) as f32).collect())
}

/// A `[d × d]` projection whose `hd`-wide head blocks are all the same
/// random `[d × hd]` matrix, so every head computes the same attention
/// pattern.
fn tiled_heads(rng: &mut XorShift64Star, d: usize, hd: usize, scale: f64) -> Result<Tensor> {
    let block: Vec<f32> = (0..d * hd).map(|_| (rng.normal() * scale) as f32).collect();
    let mut data = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            data.push(block[r * hd + c % hd]);
        }
    }
    Tensor::new(vec![d, d], data)
}

/// `strength · (outer(left, u) + sigma · noise)`. Each noise row has about
/// the norm of an `entry_scale`-sized entry of `left`, so an input mapped
/// through it leaks `sigma` times its on-direction response. The noise
/// ignores the input component along `left`, so leakage is driven only by
/// input content that does not carry the planted feature.
fn planted_matrix(
    rng: &mut XorShift64Star,
    left: &[f32],
    u: &[f32],
    strength: f32,
    sigma: f32,
    entry_scale: f64,
) -> Result<Tensor> {
    let (r, c) = (left.len(), u.len());
    let noise_scale = entry_scale / (c as f64).sqrt();
    let mut noise: Vec<f64> = (0..r * c).map(|_| rng.normal() * noise_scale).collect();
    let ln = left.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if ln > 0.0 {
        for j in 0..c {
            let proj: f64 = (0..r).map(|i| left[i] as f64 / ln * noise[i * c + j]).sum();
            (0..r).for_each(|i| noise[i * c + j] -= proj * left[i] as f64 / ln);
        }
    }
    let mut data = Vec::with_capacity(r * c);
    for (i, &l) in left.iter().enumerate() {
        for (j, &ui) in u.iter().enumerate() {
            data.push(strength * (l * ui + sigma * noise[i * c + j] as f32));
        }
    }
    Tensor::new(vec![r, c], data)
}

/// Builds a model whose `family` difference vectors lie along `u` up to
/// `noise_sigma` leakage.
///
/// Construction (all blocks start as exact pass-throughs, position
/// embeddings are zero):
/// - block 1 attention is a *mixer*: random query/key maps shared by all
///   heads and a value
///   path `strength · (u uᵀ + σ G)`, so the `u` component of any input
///   change is copied along `u`;
/// - vision: patch weights `strength · (w uᵀ + σ G)` with `w` a positive
///   unit vector over patch pixels;
/// - text: token embeddings `strength · (s_w u + σ n_w)` with scalar
///   `s_w ~ N(0, 1)`;
/// - cross-modal: patch bias `strength · u`, so black and null slots differ
///   and the caption-dependent mixer turns that into per-sample variation.
///
/// `strength = 0` removes every input-dependent pathway of the family, so
/// the matching estimator sees only zero differences.
pub fn gen_planted_model(config: ToyVlmConfig, spec: &PlantSpec) -> Result<PlantedModel> {
    config.validate()?;
    let d = config.d_model;
    if spec.direction.len() != d {
        return Err(Error::Config(format!(
            "planted direction has dim {}, d_model is {d}",
            spec.direction.len()
        )));
    }
    if (norm(&spec.direction) - 1.0).abs() > 1e-5 {
        return Err(Error::Config(format!("planted direction has norm {}", norm(&spec.direction))));
    }
    if !spec.strength.is_finite() || spec.strength < 0.0 {
        return Err(Error::Config(format!("strength {} must be >= 0", spec.strength)));
    }
    if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
        return Err(Error::Config(format!("noise_sigma {} must be >= 0", spec.noise_sigma)));
    }
    let u = &spec.direction;
    let (strength, sigma) = (spec.strength, spec.noise_sigma);
    let family_stream = match spec.family {
        Family::Vision => 1,
        Family::Text => 2,
        Family::CrossModal => 3,
    };
    let mut rng = XorShift64Star::derived(spec.seed, family_stream);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();

    let mut w = Weights::passthrough(&config)?;

    let mixer = &mut w.blocks[0];
    let hd = config.head_dim();
    mixer.wq = tiled_heads(&mut rng, d, hd, inv_sqrt_d)?;
    mixer.wk = tiled_heads(&mut rng, d, hd, inv_sqrt_d)?;
    mixer.wv = planted_matrix(&mut rng, u, u, strength, sigma, inv_sqrt_d)?;
    let mut identity = vec![0.0f32; d * d];
    (0..d).for_each(|i| identity[i * d + i] = 1.0);
    mixer.wo = Tensor::new(vec![d, d], identity)?;

    let pp = config.patch * config.patch;
    match spec.family {
        Family::Vision => {
            let wpix = vec![1.0 / config.patch as f32; pp];
            w.patch_w = planted_matrix(&mut rng, &wpix, u, strength, sigma, 1.0 / config.patch as f64)?;
            w.patch_b = normal_tensor(&mut rng, vec![d], inv_sqrt_d)?;
            w.tok_embed = normal_tensor(&mut rng, vec![config.vocab_size(), d], 1.0)?;
        }
        Family::Text => {
            let mut data = Vec::with_capacity(config.vocab_size() * d);
            for _ in 0..config.vocab_size() {
                let s = rng.normal() as f32;
                for &ui in u {
                    let noise = (rng.normal() * inv_sqrt_d) as f32;
                    data.push(strength * (s * ui + sigma * noise));
                }
            }
            w.tok_embed = Tensor::new(vec![config.vocab_size(), d], data)?;
            w.patch_w = normal_tensor(&mut rng, vec![pp, d], inv_sqrt_d)?;
            w.patch_b = normal_tensor(&mut rng, vec![d], inv_sqrt_d)?;
        }
        Family::CrossModal => {
            w.patch_w = normal_tensor(&mut rng, vec![pp, d], inv_sqrt_d)?;
            w.patch_b = Tensor::new(vec![d], u.iter().map(|&x| strength * x).collect())?;
            w.tok_embed = normal_tensor(&mut rng, vec![config.vocab_size(), d], 1.0)?;
        }
    }
    w.head_w = normal_tensor(&mut rng, vec![d, config.vocab_size()], inv_sqrt_d)?;

    let designated_layer = config.n_layers;
    Ok(PlantedModel {
        model: ToyVlm::from_parts(config, w)?,
        family: spec.family,
        direction: u.clone(),
        designated_layer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub family: Family,
    pub n_samples: usize,
    pub noise_sigma: f32,
    pub seed: u64,
    pub designated_layer: usize,
    /// `|cos|` between the estimated and planted direction at the designated layer.
    pub cosine: f64,
}

/// Plants a direction for `family`, estimates it back from `n` seeded
/// synthetic samples with `pca_dim = 1`, and reports the recovery cosine.
pub fn planted_recovery(
    config: &ToyVlmConfig,
    family: Family,
    n: usize,
    noise_sigma: f32,
    masks: &MaskSpec,
    seed: u64,
) -> Result<RecoveryReport> {
    let u = random_unit_vector(config.d_model, XorShift64Star::derived(seed, 0).next_u64());
    let planted = gen_planted_model(
        config.clone(),
        &PlantSpec { family, direction: u.clone(), strength: 1.0, noise_sigma, seed },
    )?;
    let model = &planted.model;
    let opts = EstimateOptions::default();
    let annotations = synthetic_annotations(n, &object_list(), 2, 4, seed)?;
    let estimate = match family {
        Family::Vision => {
            let images = synthetic_images(config, n, seed)?;
            estimate_nde_v(model, &images, masks, &opts)?
        }
        Family::Text => {
            let pairs = synthetic_caption_pairs(&annotations, &HallucinationLexicon::default(), seed)?;
            estimate_nde_t(model, &pairs, &opts)?
        }
        Family::CrossModal => {
            let captions: Vec<String> = annotations.iter().map(caption_for).collect();
            estimate_nde_vt(model, &captions, &opts)?
        }
    };
    let layer = planted.designated_layer;
    let vectors = estimate.steering_vectors();
    let estimated = vectors
        .get(&layer)
        .ok_or_else(|| Error::Invariant(format!("no estimate at layer {layer}")))?;
    Ok(RecoveryReport {
        family,
        n_samples: n,
        noise_sigma,
        seed,
        designated_layer: layer,
        cosine: cosine_similarity(estimated, &u)?.abs(),
    })
}

/// A seeded unit vector of dimension `d`.
pub fn random_unit_vector(d: usize, seed: u64) -> Vec<f32> {
    let mut rng = XorShift64Star::new(seed);
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: f64, b: f64, g: f64, fusion: Fusion) -> ScgSpec {
        ScgSpec { alpha_t: a, beta_v: b, gamma_f: g, fusion, noise_sigma: 0.0, seed: 0 }
    }

    #[test]
    fn simulate_examples() {
        let s = |sp: &ScgSpec| simulate_outcome(sp, &[2.0], &[3.0], None).unwrap()[0];
        assert_eq!(s(&spec(0.0, 0.0, 1.0, Fusion::Sum)), 5.0);
        assert_eq!(s(&spec(1.0, 1.0, 0.0, Fusion::Sum)), 5.0);
        assert_eq!(s(&spec(1.0, 2.0, 3.0, Fusion::Product)), 26.0);
    }

    #[test]
    fn simulate_noise_paths() {
        let mut sp = spec(1.0, 1.0, 0.0, Fusion::Sum);
        assert_eq!(simulate_outcome(&sp, &[2.0], &[3.0], Some(&[0.5])).unwrap(), vec![5.5]);
        sp.noise_sigma = 0.1;
        let a = simulate_outcome(&sp, &[2.0], &[3.0], None).unwrap();
        assert_eq!(a, simulate_outcome(&sp, &[2.0], &[3.0], None).unwrap());
        assert_ne!(a[0], 5.0);
        assert!(simulate_outcome(&sp, &[2.0], &[3.0, 1.0], None).is_err());
        sp.noise_sigma = -1.0;
        assert!(simulate_outcome(&sp, &[2.0], &[3.0], None).is_err());
    }

    #[test]
    fn oracle_examples() {
        let v = oracle_nde_scalar(&spec(0.0, 1.0, 0.0, Fusion::Sum), NdeKind::V, 0.0, 3.0, 1.0, None).unwrap();
        assert_eq!(v, 2.0);
        let t = oracle_nde_scalar(&spec(1.0, 7.0, 1.0, Fusion::Sum), NdeKind::T, 4.0, 2.0, 1.0, None).unwrap();
        assert_eq!(t, 6.0);
        let vt = oracle_nde_scalar(&spec(0.0, 2.0, 1.0, Fusion::Sum), NdeKind::VT, 5.0, 9.0, 1.0, Some(0.0)).unwrap();
        assert_eq!(vt, 3.0);
    }

    #[test]
    fn oracle_errors() {
        let mut sp = spec(1.0, 1.0, 1.0, Fusion::Sum);
        assert!(matches!(
            oracle_nde_scalar(&sp, NdeKind::VT, 1.0, 1.0, 1.0, None),
            Err(Error::MissingNull)
        ));
        sp.noise_sigma = 0.2;
        assert!(matches!(
            oracle_nde_scalar(&sp, NdeKind::V, 1.0, 1.0, 1.0, None),
            Err(Error::Noise(_))
        ));
    }

    #[test]
    fn untreated_contrast_is_zero() {
        let sp = spec(0.3, -1.7, 2.2, Fusion::Product);
        assert_eq!(oracle_nde_scalar(&sp, NdeKind::V, 1.3, 0.4, 0.4, None).unwrap(), 0.0);
    }

    #[test]
    fn spec_json_shape() {
        let sp: ScgSpec = serde_json::from_str(
            r#"{"alpha_t":1.0,"beta_v":2.0,"gamma_f":3.0,"fusion":"sum","noise_sigma":0.0,"seed":0}"#,
        )
        .unwrap();
        assert_eq!(sp, spec(1.0, 2.0, 3.0, Fusion::Sum));
    }

    #[test]
    fn planted_model_is_deterministic_and_validated() {
        let cfg = ToyVlmConfig { n_layers: 2, ..Default::default() };
        let u = random_unit_vector(cfg.d_model, 5);
        let ps = PlantSpec { family: Family::Vision, direction: u.clone(), strength: 1.0, noise_sigma: 0.05, seed: 9 };
        let a = gen_planted_model(cfg.clone(), &ps).unwrap();
        let b = gen_planted_model(cfg.clone(), &ps).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        let bad = PlantSpec { direction: vec![1.0; cfg.d_model], ..ps.clone() };
        assert!(matches!(gen_planted_model(cfg.clone(), &bad), Err(Error::Config(_))));
        let bad = PlantSpec { strength: -1.0, ..ps };
        assert!(matches!(gen_planted_model(cfg, &bad), Err(Error::Config(_))));
    }
}
