// SPDX-License-Identifier: MIT OR Apache-2.0

//! Principal directions of a stack of difference vectors.

use super::{eigen::symmetric_eigen, Tensor};
use crate::error::{Error, Result};

/// Top eigenvalues at or below this are treated as "no variance at all".
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalDirections {
    /// Unit-norm, pairwise orthogonal, strongest first.
    pub directions: Vec<Vec<f32>>,
    /// Sample-covariance eigenvalue (denominator `N - 1`) for each direction.
    pub explained_variance: Vec<f64>,
}

impl PrincipalDirections {
    pub fn first(&self) -> &[f32] {
        &self.directions[0]
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map(Vec::len).unwrap_or(0)
    }
}

/// Top-`pca_dim` eigenvectors of the column-centered sample covariance of
/// `matrix` (`[N × d]`).
///
/// Each direction is oriented so its dot product with `orient_hint` is
/// nonnegative. The hint defaults to the column mean of the uncentered
/// matrix. When the dot product vanishes, the largest-magnitude coordinate
/// is made positive instead.
pub fn pca_principal_directions(
    matrix: &Tensor,
    pca_dim: usize,
    orient_hint: Option<&[f32]>,
) -> Result<PrincipalDirections> {
    let (n, d) = match matrix.dims() {
        &[n, d] => (n, d),
        dims => return Err(Error::Shape(format!("PCA needs an N×d matrix, got {dims:?}"))),
    };
    if n < 2 {
        return Err(Error::Shape(format!("PCA needs at least 2 rows, got {n}")));
    }
    if pca_dim == 0 || pca_dim > n.min(d) {
        return Err(Error::Shape(format!(
            "pca_dim {pca_dim} must be in [1, {}]",
            n.min(d)
        )));
    }
    if let Some(h) = orient_hint {
        if h.len() != d {
            return Err(Error::Shape(format!("orient hint of dim {} for d = {d}", h.len())));
        }
    }

    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(matrix.row(r)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered: Vec<f64> = (0..n)
        .flat_map(|r| matrix.row(r).iter().zip(&mean).map(|(&v, &m)| v as f64 - m))
        .collect();
    let mut cov = vec![0.0f64; d * d];
    for r in 0..n {
        let row = &centered[r * d..(r + 1) * d];
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += ri * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / denom;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }

    let eig = symmetric_eigen(&cov, d)?;
    if eig.values[0] <= DEGENERATE_EIGENVALUE {
        return Err(Error::DegenerateVariance {
            top_eigenvalue: eig.values[0],
            layer: None,
        });
    }

    let hint: Vec<f64> = match orient_hint {
        Some(h) => h.iter().map(|&v| v as f64).collect(),
        None => mean,
    };
    let hint_norm = hint.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut directions = Vec::with_capacity(pca_dim);
    let mut explained_variance = Vec::with_capacity(pca_dim);
    for k in 0..pca_dim {
        let mut v = eig.vectors[k].clone();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= len);
        let along: f64 = v.iter().zip(&hint).map(|(a, b)| a * b).sum();
        let flip = if along.abs() > 1e-12 * hint_norm.max(f64::MIN_POSITIVE) {
            along < 0.0
        } else {
            let (mut best, mut best_abs) = (0, -1.0);
            for (i, x) in v.iter().enumerate() {
                if x.abs() > best_abs {
                    best = i;
                    best_abs = x.abs();
                }
            }
            v[best] < 0.0
        };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        directions.push(v.into_iter().map(|x| x as f32).collect());
        explained_variance.push(eig.values[k].max(0.0));
    }
    Ok(PrincipalDirections {
        directions,
        explained_variance,
    })
}
