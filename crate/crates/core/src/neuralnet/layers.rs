//! Elementary layers: SiLU, batch normalization, mean squared error.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};

/// Epsilon inside the batch-norm variance square root.
pub const BN_EPSILON: f64 = 1e-5;

/// Running-statistics weight for one train-mode batch:
/// `running = (1 - BN_MOMENTUM) * running + BN_MOMENTUM * batch`.
pub const BN_MOMENTUM: f64 = 0.1;

// ---------------------------------------------------------------------------
// SiLU
// ---------------------------------------------------------------------------

/// `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// d/dx silu(x) = sigmoid(x) * (1 + x * (1 - sigmoid(x))).
pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn silu_forward(x: &Matrix) -> Matrix {
    Matrix::from_vec(x.rows, x.cols, x.data.iter().map(|&v| silu(v)).collect())
}

/// Gradient w.r.t. the SiLU input, given the pre-activation input.
pub fn silu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let data = x
        .data
        .iter()
        .zip(dy.data.iter())
        .map(|(&xi, &di)| di * silu_derivative(xi))
        .collect();
    Matrix::from_vec(x.rows, x.cols, data)
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-feature running statistics, updated in train mode and consumed in
/// eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnRunning {
    pub fn identity(width: usize) -> Self {
        BnRunning { mean: vec![0.0; width], var: vec![1.0; width] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What the backward pass needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Matrix,
    pub inv_std: Vec<f64>,
}

/// Train-mode forward: normalize by batch statistics (biased variance),
/// scale/shift by gamma/beta, and fold the batch statistics into the
/// running averages.
pub fn bn_forward_train(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    running: &mut BnRunning,
) -> Result<(Matrix, BnCache)> {
    let (m, d) = (x.rows, x.cols);
    if m < 2 {
        return Err(Error::DegenerateBatch { batch: m });
    }
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (j, v) in x.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for mj in mean.iter_mut() {
        *mj /= m as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..m {
        for (j, v) in x.row(i).iter().enumerate() {
            let c = v - mean[j];
            var[j] += c * c;
        }
    }
    for vj in var.iter_mut() {
        *vj /= m as f64;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut x_hat = Matrix::zeros(m, d);
    let mut y = Matrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            let h = (x.data[i * d + j] - mean[j]) * inv_std[j];
            x_hat.data[i * d + j] = h;
            y.data[i * d + j] = gamma[j] * h + beta[j];
        }
    }
    for j in 0..d {
        running.mean[j] = (1.0 - BN_MOMENTUM) * running.mean[j] + BN_MOMENTUM * mean[j];
        running.var[j] = (1.0 - BN_MOMENTUM) * running.var[j] + BN_MOMENTUM * var[j];
    }
    Ok((y, BnCache { x_hat, inv_std }))
}

/// Eval-mode forward: normalize by the running statistics.
pub fn bn_forward_eval(x: &Matrix, gamma: &[f64], beta: &[f64], running: &BnRunning) -> Matrix {
    let (m, d) = (x.rows, x.cols);
    let inv_std: Vec<f64> = running.var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut y = Matrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            y.data[i * d + j] =
                gamma[j] * (x.data[i * d + j] - running.mean[j]) * inv_std[j] + beta[j];
        }
    }
    y
}

/// Gradients through train-mode batch normalization.
///
/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward(
    dy: &Matrix,
    gamma: &[f64],
    cache: &BnCache,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (m, d) = (dy.rows, dy.cols);
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    for i in 0..m {
        for j in 0..d {
            let dyij = dy.data[i * d + j];
            dgamma[j] += dyij * cache.x_hat.data[i * d + j];
            dbeta[j] += dyij;
        }
    }
    // dx from the compact closed form over batch statistics.
    let mut sum_dxhat = vec![0.0; d];
    let mut sum_dxhat_xhat = vec![0.0; d];
    for i in 0..m {
        for j in 0..d {
            let dxh = dy.data[i * d + j] * gamma[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * cache.x_hat.data[i * d + j];
        }
    }
    let mut dx = Matrix::zeros(m, d);
    let mf = m as f64;
    for i in 0..m {
        for j in 0..d {
            let dxh = dy.data[i * d + j] * gamma[j];
            let xh = cache.x_hat.data[i * d + j];
            dx.data[i * d + j] =
                cache.inv_std[j] / mf * (mf * dxh - sum_dxhat[j] - xh * sum_dxhat_xhat[j]);
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Mean squared error
// ---------------------------------------------------------------------------

/// Mean of squared differences.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { left: pred.len(), right: target.len() });
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// `d mse / d pred = 2 (pred - target) / N`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { left: pred.len(), right: target.len() });
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect())
}
