// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major f32 tensors and the handful of kernels the toy model and
//! the estimators need.
//!
//! Reductions accumulate in f64 and round once on store, which keeps results
//! stable across platforms at the tolerances the tests pin.

mod eigen;
mod io;
mod kernels;
mod pca;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use io::{decode_tensor, encode_tensor, load_tensor, save_tensor, TENSOR_MAGIC, TENSOR_VERSION};
pub use kernels::{gelu, layer_norm_rows, softmax_in_place};
pub use pca::{pca_principal_directions, PrincipalDirections, DEGENERATE_EIGENVALUE};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Validates `∏dims == data.len()`, positive dims and finite values.
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let numel = dims.iter().product();
        Self::new(dims, vec![0.0; numel])
    }

    /// Stacks equal-length rows into an `[n × d]` matrix.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), d], rows.concat())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn expect_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match self.dims.as_slice() {
            &[r, c] => Ok((r, c)),
            d => Err(Error::Shape(format!("{what}: expected a matrix, got dims {d:?}"))),
        }
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Product of trailing dimensions.
    pub fn cols(&self) -> usize {
        self.dims[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// `[n × k] · [k × m] → [n × m]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = self.expect_matrix("matmul lhs")?;
        let (k2, m) = rhs.expect_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner dims {k} vs {k2}")));
        }
        let mut out = vec![0.0f32; n * m];
        let mut acc = vec![0.0f64; m];
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let lhs_row = &self.data[i * k..(i + 1) * k];
            for (p, &l) in lhs_row.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let l = l as f64;
                let rhs_row = &rhs.data[p * m..(p + 1) * m];
                for (a, &r) in acc.iter_mut().zip(rhs_row) {
                    *a += l * r as f64;
                }
            }
            for (o, a) in out[i * m..(i + 1) * m].iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
        finite(Tensor { dims: vec![n, m], data: out }, "matmul")
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.expect_matrix("transpose")?;
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor { dims: vec![c, r], data: out })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f32) -> Result<Tensor> {
        let data = self.data.iter().map(|&v| v * s).collect();
        finite(Tensor { dims: self.dims.clone(), data }, "scale")
    }

    /// Adds `bias` to every row.
    pub fn add_row(&self, bias: &[f32]) -> Result<Tensor> {
        if bias.len() != self.cols() {
            return Err(Error::Shape(format!(
                "row bias of length {} for {} columns",
                bias.len(),
                self.cols()
            )));
        }
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(bias.len()) {
            for (v, &b) in chunk.iter_mut().zip(bias) {
                *v += b;
            }
        }
        finite(out, "add_row")
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        finite(Tensor { dims: self.dims.clone(), data }, op)
    }
}

fn finite(t: Tensor, op: &'static str) -> Result<Tensor> {
    if t.data.iter().all(|v| v.is_finite()) {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
    }
}

/// f64-accumulated dot product.
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of dims {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu <= 1e-12 || nv <= 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Returns `u / ‖u‖`.
pub fn normalized(u: &[f32]) -> Result<Vec<f32>> {
    let n = norm(u);
    if n <= 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok(u.iter().map(|&x| (x as f64 / n) as f32).collect())
}
