// SPDX-License-Identifier: MIT OR Apache-2.0

use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer norm with learned gain and bias.
pub fn layer_norm_rows(x: &Tensor, gain: &[f32], bias: &[f32]) -> Result<Tensor> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::Shape(format!(
            "layer norm params {}/{} for width {d}",
            gain.len(),
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(x.numel());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        out.extend(
            row.iter()
                .zip(gain.iter().zip(bias))
                .map(|(&v, (&g, &b))| ((v as f64 - mean) * inv * g as f64 + b as f64) as f32),
        );
    }
    Tensor::new(x.dims().to_vec(), out)
}

/// Tanh-approximated GELU.
pub fn gelu(v: f32) -> f32 {
    let x = v as f64;
    let inner = (2.0 / std::f64::consts::PI).sqrt() * (x + 0.044_715 * x * x * x);
    (0.5 * x * (1.0 + inner.tanh())) as f32
}

/// Numerically stable softmax over `scores`; entries set to `-inf` get zero weight.
pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = if s.is_finite() { (*s - max).exp() } else { 0.0 };
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = Tensor::new(vec![1, 4], vec![1., 2., 3., 4.]).unwrap();
        let y = layer_norm_rows(&x, &[1.; 4], &[0.; 4]).unwrap();
        let mean: f32 = y.data().iter().sum::<f32>() / 4.0;
        let var: f32 = y.data().iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_of_zero_row_is_bias() {
        let x = Tensor::zeros(vec![1, 3]).unwrap();
        let y = layer_norm_rows(&x, &[2.; 3], &[0.5, -1., 0.]).unwrap();
        assert_eq!(y.data(), &[0.5, -1., 0.]);
    }

    #[test]
    fn softmax_masks_neg_inf() {
        let mut s = [0.0, f64::NEG_INFINITY, 0.0];
        softmax_in_place(&mut s);
        assert_eq!(s, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu(-1.0) + 0.158_808).abs() < 1e-5);
    }
}
