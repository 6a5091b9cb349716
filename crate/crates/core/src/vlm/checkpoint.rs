// SPDX-License-Identifier: MIT OR Apache-2.0

//! `TVLM` checkpoint files.
//!
//! Layout: magic `TVLM`, version byte `0x01`, a u32-LE length-prefixed UTF-8
//! JSON config blob, then named sections until end of file, each a u32-LE
//! length-prefixed UTF-8 name followed by an embedded `TNSR` tensor.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ToyVlmConfig;
use super::model::{ToyVlm, Weights};
use crate::error::{Error, Result};
use crate::tensor::{decode_tensor, encode_tensor, load_tensor, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TVLM";
pub const CHECKPOINT_VERSION: u8 = 0x01;

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_str(input: &mut &[u8], what: &str) -> Result<String> {
    if input.len() < 4 {
        return Err(Error::TruncatedFile { expected: 4, found: input.len() });
    }
    let len = u32::from_le_bytes([input[0], input[1], input[2], input[3]]) as usize;
    *input = &input[4..];
    if input.len() < len {
        return Err(Error::TruncatedFile { expected: len, found: input.len() });
    }
    let (s, rest) = input.split_at(len);
    *input = rest;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
}

impl ToyVlm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        let config = serde_json::to_string(self.config()).expect("config serializes");
        push_str(&mut out, &config);
        for (name, tensor) in self.weights().sections() {
            push_str(&mut out, &name);
            encode_tensor(tensor, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(Error::TruncatedFile { expected: 5, found: bytes.len() });
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        if bytes[4] != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: bytes[4],
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut input = &bytes[5..];
        let config_json = read_str(&mut input, "config")?;
        let config: ToyVlmConfig = serde_json::from_str(&config_json)
            .map_err(|e| Error::Format(format!("config blob: {e}")))?;
        config.validate()?;

        let mut sections: HashMap<String, Tensor> = HashMap::new();
        while !input.is_empty() {
            let name = read_str(&mut input, "section name")?;
            let tensor = decode_tensor(&mut input)?;
            if sections.insert(name.clone(), tensor).is_some() {
                return Err(Error::Format(format!("duplicate section {name}")));
            }
        }
        let weights = Weights::build(&config, |name, dims| {
            let t = sections
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing section {name}")))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "section {name}: dims {:?}, config implies {dims:?}",
                    t.dims()
                )));
            }
            Ok(t)
        })?;
        if let Some(extra) = sections.keys().min() {
            return Err(Error::Format(format!("unknown section {extra}")));
        }
        ToyVlm::from_parts(config, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Loads a `[H × W]` image tensor, clamping pixels into `[0, 1]`.
///
/// Returns the image and the number of pixels that needed clamping.
pub fn load_image(path: impl AsRef<Path>) -> Result<(Tensor, usize)> {
    let t = load_tensor(path)?;
    if t.dims().len() != 2 {
        return Err(Error::Shape(format!("image must be [H, W], got {:?}", t.dims())));
    }
    let mut clamped = 0;
    let data = t
        .data()
        .iter()
        .map(|&v| {
            let c = v.clamp(0.0, 1.0);
            if c != v {
                clamped += 1;
            }
            c
        })
        .collect();
    if clamped > 0 {
        log::warn!("clamped {clamped} pixel(s) into [0, 1]");
    }
    Ok((Tensor::new(t.dims().to_vec(), data)?, clamped))
}
