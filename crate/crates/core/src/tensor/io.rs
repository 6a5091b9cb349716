// SPDX-License-Identifier: MIT OR Apache-2.0

//! `TNSR` tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                     |
//! |--------------|-----------------------------|
//! | 4            | magic `TNSR`                |
//! | 1            | version `0x01`              |
//! | 1            | dtype `0x00` (f32)          |
//! | 4            | `ndim` as u32               |
//! | 4 · ndim     | dims as u32                 |
//! | 4 · ∏dims    | f32 payload, row-major      |

use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
pub const TENSOR_VERSION: u8 = 0x01;
const DTYPE_F32: u8 = 0x00;

pub fn encode_tensor(t: &Tensor, out: &mut Vec<u8>) {
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.reserve(4 * t.numel());
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn take<'a>(input: &mut &'a [u8], n: usize, consumed: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::TruncatedFile {
            expected: consumed + n,
            found: consumed + input.len(),
        });
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

fn read_u32(input: &mut &[u8], consumed: usize) -> Result<u32> {
    let b = take(input, 4, consumed)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Decodes one tensor from the front of `input`, advancing it past the tensor.
pub fn decode_tensor(input: &mut &[u8]) -> Result<Tensor> {
    let magic = take(input, 4, 0)?;
    if magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {:?}", String::from_utf8_lossy(magic))));
    }
    let header = take(input, 2, 4)?;
    if header[0] != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {:#04x}", header[0])));
    }
    if header[1] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported tensor dtype {:#04x}", header[1])));
    }
    let ndim = read_u32(input, 6)? as usize;
    let mut consumed = 10;
    let mut dims = Vec::with_capacity(ndim.min(16));
    for _ in 0..ndim {
        dims.push(read_u32(input, consumed)? as usize);
        consumed += 4;
    }
    let numel = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let bytes = numel
        .checked_mul(4)
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let payload = take(input, bytes, consumed)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data).map_err(|e| match e {
        Error::Shape(msg) => Error::Format(msg),
        other => other,
    })
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode_tensor(t, &mut buf);
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = bytes.as_slice();
    let t = decode_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after tensor", cursor.len())));
    }
    Ok(t)
}
