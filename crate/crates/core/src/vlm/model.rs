// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-LayerNorm decoder with a linear patch encoder.
//!
//! Sequence layout is `[vision slots][prompt text][generated]`, one shared
//! residual stream. "Layer i" is the residual stream after block `i`; layer 0
//! is the embedding sum. Logits are a plain affine readout of the last
//! layer (no final norm), so an edit `δ` at the final layer moves the logits
//! by exactly `δ · head`.

use serde::{Deserialize, Serialize};

use super::config::{AttentionMode, ToyVlmConfig};
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};
use crate::intervene::Intervention;
use crate::rng::XorShift64Star;
use crate::tensor::{gelu, layer_norm_rows, softmax_in_place, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Vision,
    Text,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `[vocab × d]`
    pub tok_embed: Tensor,
    /// `[max_seq × d]`
    pub pos_embed: Tensor,
    /// `[patch² × d]`
    pub patch_w: Tensor,
    /// `[d]`
    pub patch_b: Tensor,
    pub blocks: Vec<Block>,
    /// `[d × vocab]`
    pub head_w: Tensor,
    /// `[vocab]`
    pub head_b: Tensor,
}

impl Weights {
    /// Named sections in checkpoint order.
    pub fn sections(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("tok_embed".to_string(), &self.tok_embed),
            ("pos_embed".to_string(), &self.pos_embed),
            ("patch_embed.weight".to_string(), &self.patch_w),
            ("patch_embed.bias".to_string(), &self.patch_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let l = i + 1;
            for (name, t) in [
                ("ln1.gain", &b.ln1_gain),
                ("ln1.bias", &b.ln1_bias),
                ("attn.wq", &b.wq),
                ("attn.wk", &b.wk),
                ("attn.wv", &b.wv),
                ("attn.wo", &b.wo),
                ("ln2.gain", &b.ln2_gain),
                ("ln2.bias", &b.ln2_bias),
                ("mlp.w1", &b.w1),
                ("mlp.b1", &b.b1),
                ("mlp.w2", &b.w2),
                ("mlp.b2", &b.b2),
            ] {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("head.weight".to_string(), &self.head_w));
        out.push(("head.bias".to_string(), &self.head_b));
        out
    }

    /// Builds weights from a generator `make(name, dims)` called in
    /// checkpoint section order.
    pub(crate) fn build(
        config: &ToyVlmConfig,
        mut make: impl FnMut(&str, Vec<usize>) -> Result<Tensor>,
    ) -> Result<Self> {
        let d = config.d_model;
        let v = config.vocab_size();
        let ff = config.d_ff();
        let tok_embed = make("tok_embed", vec![v, d])?;
        let pos_embed = make("pos_embed", vec![config.max_seq, d])?;
        let patch_w = make("patch_embed.weight", vec![config.patch * config.patch, d])?;
        let patch_b = make("patch_embed.bias", vec![d])?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for l in 1..=config.n_layers {
            let mut m = |name: &str, dims: Vec<usize>| make(&format!("layers.{l}.{name}"), dims);
            blocks.push(Block {
                ln1_gain: m("ln1.gain", vec![d])?,
                ln1_bias: m("ln1.bias", vec![d])?,
                wq: m("attn.wq", vec![d, d])?,
                wk: m("attn.wk", vec![d, d])?,
                wv: m("attn.wv", vec![d, d])?,
                wo: m("attn.wo", vec![d, d])?,
                ln2_gain: m("ln2.gain", vec![d])?,
                ln2_bias: m("ln2.bias", vec![d])?,
                w1: m("mlp.w1", vec![d, ff])?,
                b1: m("mlp.b1", vec![ff])?,
                w2: m("mlp.w2", vec![ff, d])?,
                b2: m("mlp.b2", vec![d])?,
            });
        }
        let head_w = make("head.weight", vec![d, v])?;
        let head_b = make("head.bias", vec![v])?;
        Ok(Self {
            tok_embed,
            pos_embed,
            patch_w,
            patch_b,
            blocks,
            head_w,
            head_b,
        })
    }

    /// All-zero weights with unit layer-norm gains: every block is an exact
    /// pass-through of the residual stream.
    pub fn passthrough(config: &ToyVlmConfig) -> Result<Self> {
        Self::build(config, |name, dims| {
            if name.ends_with("ln1.gain") || name.ends_with("ln2.gain") {
                let n = dims.iter().product();
                Tensor::new(dims, vec![1.0; n])
            } else {
                Tensor::zeros(dims)
            }
        })
    }
}

/// Hidden states of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub roles: Vec<Role>,
    /// `n_layers + 1` tensors of shape `[seq × d_model]`; index 0 is the embedding layer.
    pub layers: Vec<Tensor>,
}

impl ActivationTrace {
    pub fn hidden(&self, layer: usize, position: usize) -> &[f32] {
        self.layers[layer].row(position)
    }

    pub fn positions(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == role)
            .map(|(i, _)| i)
    }

    pub fn n_vision(&self) -> usize {
        self.positions(Role::Vision).count()
    }

    pub fn last_text_position(&self) -> Option<usize> {
        self.positions(Role::Text).last()
    }
}

/// What occupies the vision slots.
#[derive(Debug, Clone, Copy)]
pub enum VisionInput<'a> {
    /// No vision slots at all.
    None,
    /// `[image_h × image_w]` pixels run through the patch encoder.
    Image(&'a Tensor),
    /// `[n_patches × d_model]` embeddings placed directly in the slots.
    Embeddings(&'a Tensor),
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[seq × vocab]`
    pub logits: Tensor,
    pub trace: Option<ActivationTrace>,
}

#[derive(Debug, Clone)]
pub struct ToyVlm {
    config: ToyVlmConfig,
    weights: Weights,
    tokenizer: Tokenizer,
}

impl ToyVlm {
    /// Seeded initialization.
    ///
    /// Matrices, embeddings and biases are standard normals from
    /// [`XorShift64Star`] seeded with `config.seed`, scaled by `1/√d_model`,
    /// drawn in checkpoint section order. Layer-norm gains are 1 and
    /// layer-norm biases 0.
    pub fn init_seeded(config: ToyVlmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = XorShift64Star::new(config.seed);
        let scale = 1.0 / (config.d_model as f64).sqrt();
        let weights = Weights::build(&config, |name, dims| {
            let n: usize = dims.iter().product();
            let data = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with("ln1.bias") || name.ends_with("ln2.bias") {
                vec![0.0; n]
            } else {
                (0..n).map(|_| (rng.normal() * scale) as f32).collect()
            };
            Tensor::new(dims, data)
        })?;
        Self::from_parts(config, weights)
    }

    /// Assembles a model from explicit weights, checking every section's dims.
    pub fn from_parts(config: ToyVlmConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        if weights.blocks.len() != config.n_layers {
            return Err(Error::Shape(format!(
                "{} blocks for n_layers = {}",
                weights.blocks.len(),
                config.n_layers
            )));
        }
        let expected = Weights::build(&config, |_, dims| Tensor::zeros(dims))?;
        for ((name, have), (_, want)) in weights.sections().into_iter().zip(expected.sections()) {
            if have.dims() != want.dims() {
                return Err(Error::Shape(format!(
                    "section {name}: dims {:?}, expected {:?}",
                    have.dims(),
                    want.dims()
                )));
            }
        }
        let tokenizer = Tokenizer::new(&config.vocab);
        Ok(Self {
            config,
            weights,
            tokenizer,
        })
    }

    pub fn config(&self) -> &ToyVlmConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn into_parts(self) -> (ToyVlmConfig, Weights) {
        (self.config, self.weights)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Patch embeddings `[n_patches × d_model]`, patches in raster order.
    pub fn encode_image(&self, image: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        if image.dims() != [c.image_h, c.image_w] {
            return Err(Error::Shape(format!(
                "image dims {:?}, model expects [{}, {}]",
                image.dims(),
                c.image_h,
                c.image_w
            )));
        }
        let p = c.patch;
        let (gh, gw) = (c.image_h / p, c.image_w / p);
        let mut flat = Vec::with_capacity(gh * gw * p * p);
        for py in 0..gh {
            for px in 0..gw {
                for y in 0..p {
                    let start = (py * p + y) * c.image_w + px * p;
                    flat.extend_from_slice(&image.data()[start..start + p]);
                }
            }
        }
        let patches = Tensor::new(vec![gh * gw, p * p], flat)?;
        patches
            .matmul(&self.weights.patch_w)?
            .add_row(self.weights.patch_b.data())
    }

    fn embed(&self, vision: VisionInput<'_>, tokens: &[u32]) -> Result<(Tensor, usize)> {
        let d = self.config.d_model;
        let vision_rows = match vision {
            VisionInput::None => None,
            VisionInput::Image(img) => Some(self.encode_image(img)?),
            VisionInput::Embeddings(e) => {
                if e.dims() != [self.config.n_patches(), d] {
                    return Err(Error::Shape(format!(
                        "vision embeddings {:?}, expected [{}, {d}]",
                        e.dims(),
                        self.config.n_patches()
                    )));
                }
                Some(e.clone())
            }
        };
        let n_vis = vision_rows.as_ref().map(Tensor::rows).unwrap_or(0);
        let seq = n_vis + tokens.len();
        if seq == 0 {
            return Err(Error::Shape("empty input sequence".into()));
        }
        if seq > self.config.max_seq {
            return Err(Error::Overflow {
                len: seq,
                max_seq: self.config.max_seq,
            });
        }
        let mut data = Vec::with_capacity(seq * d);
        if let Some(v) = &vision_rows {
            data.extend_from_slice(v.data());
        }
        for &id in tokens {
            if id as usize >= self.config.vocab_size() {
                return Err(Error::Shape(format!(
                    "token id {id} outside vocab of {}",
                    self.config.vocab_size()
                )));
            }
            data.extend_from_slice(self.weights.tok_embed.row(id as usize));
        }
        let pos = &self.weights.pos_embed.data()[..seq * d];
        for (x, &p) in data.iter_mut().zip(pos) {
            *x += p;
        }
        Ok((Tensor::new(vec![seq, d], data)?, n_vis))
    }

    /// Runs the model over `[vision][prompt][generated]`.
    ///
    /// When `intervention` is given, hidden states are edited after every
    /// configured layer, before the next block reads them. A recorded trace
    /// holds the post-edit states.
    pub fn forward(
        &self,
        vision: VisionInput<'_>,
        prompt: &[u32],
        generated: &[u32],
        intervention: Option<&Intervention<'_>>,
        record: bool,
    ) -> Result<ForwardOutput> {
        let tokens: Vec<u32> = prompt.iter().chain(generated).copied().collect();
        let (mut h, n_vis) = self.embed(vision, &tokens)?;
        let mut roles = vec![Role::Vision; n_vis];
        roles.extend(std::iter::repeat_n(Role::Text, prompt.len()));
        roles.extend(std::iter::repeat_n(Role::Generated, generated.len()));
        let prefix_len = n_vis + prompt.len();

        let mut layers = Vec::new();
        let edit = |h: &mut Tensor, layer: usize| -> Result<()> {
            if let Some(iv) = intervention {
                if iv.touches_layer(layer) {
                    for (pos, &role) in roles.iter().enumerate() {
                        iv.apply_in_place(h.row_mut(pos), role, layer)?;
                    }
                    if h.data().iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("intervention"));
                    }
                }
            }
            Ok(())
        };

        edit(&mut h, 0)?;
        if record {
            layers.push(h.clone());
        }
        for (i, block) in self.weights.blocks.iter().enumerate() {
            h = self.block_forward(block, &h, prefix_len)?;
            edit(&mut h, i + 1)?;
            if record {
                layers.push(h.clone());
            }
        }
        let logits = h
            .matmul(&self.weights.head_w)?
            .add_row(self.weights.head_b.data())?;
        Ok(ForwardOutput {
            logits,
            trace: record.then(|| ActivationTrace { roles: roles.clone(), layers }),
        })
    }

    fn attends(&self, query: usize, key: usize, prefix_len: usize) -> bool {
        match self.config.attention_mode {
            AttentionMode::FullyCausal => key <= query,
            AttentionMode::PrefixBidirectional => {
                if query < prefix_len {
                    key < prefix_len
                } else {
                    key <= query
                }
            }
        }
    }

    fn block_forward(&self, b: &Block, h: &Tensor, prefix_len: usize) -> Result<Tensor> {
        let seq = h.rows();
        let d = self.config.d_model;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let x = layer_norm_rows(h, b.ln1_gain.data(), b.ln1_bias.data())?;
        let q = x.matmul(&b.wq)?;
        let k = x.matmul(&b.wk)?;
        let v = x.matmul(&b.wv)?;
        let mut heads = vec![0.0f32; seq * d];
        let mut scores = vec![0.0f64; seq];
        for head in 0..self.config.n_heads {
            let cols = head * hd..(head + 1) * hd;
            for i in 0..seq {
                let qi = &q.row(i)[cols.clone()];
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = if self.attends(i, j, prefix_len) {
                        let kj = &k.row(j)[cols.clone()];
                        qi.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() * scale
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                softmax_in_place(&mut scores);
                let mut acc = vec![0.0f64; hd];
                for (j, &w) in scores.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (a, &vv) in acc.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *a += w * vv as f64;
                    }
                }
                for (o, a) in heads[i * d + head * hd..i * d + (head + 1) * hd].iter_mut().zip(&acc) {
                    *o = *a as f32;
                }
            }
        }
        let attn = Tensor::new(vec![seq, d], heads)?.matmul(&b.wo)?;
        let h = h.add(&attn)?;

        let x2 = layer_norm_rows(&h, b.ln2_gain.data(), b.ln2_bias.data())?;
        let hidden = x2.matmul(&b.w1)?.add_row(b.b1.data())?;
        let activated = Tensor::new(
            hidden.dims().to_vec(),
            hidden.data().iter().map(|&v| gelu(v)).collect(),
        )?;
        let mlp = activated.matmul(&b.w2)?.add_row(b.b2.data())?;
        h.add(&mlp)
    }

    /// Greedy decoding. Ties go to the lowest token id; stops after emitting
    /// EOS (which is included) or after `max_new` tokens.
    pub fn generate_greedy(
        &self,
        vision: VisionInput<'_>,
        prompt: &[u32],
        max_new: usize,
        intervention: Option<&Intervention<'_>>,
    ) -> Result<Vec<u32>> {
        if max_new == 0 {
            return Err(Error::Config("max_new must be at least 1".into()));
        }
        let eos = self.tokenizer.eos();
        let mut generated = Vec::with_capacity(max_new);
        for _ in 0..max_new {
            let out = self.forward(vision, prompt, &generated, intervention, false)?;
            let last = out.logits.row(out.logits.rows() - 1);
            let next = argmax_lowest(last) as u32;
            generated.push(next);
            if next == eos {
                break;
            }
        }
        Ok(generated)
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax_lowest(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
