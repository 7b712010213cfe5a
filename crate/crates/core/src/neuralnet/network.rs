//! Architecture definitions and the forward/backward engine.
//!
//! Both architectures compile to a flat op list over batch activations,
//! with trainable parameters living in one flat vector addressed through
//! named slices. Backward walks the same list in reverse, so every layer
//! type has exactly one forward and one backward implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    bn_backward, bn_forward_eval, bn_forward_train, silu_backward, silu_forward, BnCache,
    BnRunning, Mode,
};
use super::linalg::Matrix;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    /// Entry dense to `width`, then `blocks` residual blocks
    /// [dense, BN, SiLU, dense, BN, add skip, SiLU], then dense to 1.
    Residual { width: usize, blocks: usize },
    /// Plain bottleneck stack: dense+BN+SiLU through `widths`, then a
    /// dense regression head to 1.
    AutoEncoder { widths: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub input_width: usize,
    pub output_width: usize,
}

impl ArchSpec {
    pub fn residual(width: usize, blocks: usize) -> Self {
        ArchSpec {
            kind: ArchKind::Residual { width, blocks },
            input_width: 1024,
            output_width: 1,
        }
    }

    /// Bottleneck encoder/decoder widths; the default mirrors
    /// 1024 -> 256 -> 64 -> 16 -> 64 -> 1.
    pub fn autoencoder(widths: Vec<usize>) -> Self {
        ArchSpec { kind: ArchKind::AutoEncoder { widths }, input_width: 1024, output_width: 1 }
    }

    pub fn with_input_width(mut self, input_width: usize) -> Self {
        self.input_width = input_width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width != 1 {
            return Err(Error::Domain(
                "architecture needs input_width > 0 and output_width == 1".into(),
            ));
        }
        match &self.kind {
            ArchKind::Residual { width, blocks } => {
                if *width == 0 || *blocks == 0 {
                    return Err(Error::Domain("residual width and blocks must be > 0".into()));
                }
            }
            ArchKind::AutoEncoder { widths } => {
                if widths.is_empty() || widths.iter().any(|&w| w == 0) {
                    return Err(Error::Domain("autoencoder widths must be nonempty and > 0".into()));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Op list and parameter layout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    /// y = x * W + b; slice indices for W and b.
    Dense { w: usize, b: usize, in_w: usize, out_w: usize },
    /// Batch normalization; slice indices for gamma/beta and the index of
    /// its running-statistics entry.
    BatchNorm { gamma: usize, beta: usize, bn: usize },
    Silu,
    /// Remember the current activation for a later SkipAdd.
    SkipStart,
    /// Add the remembered activation back in.
    SkipAdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

struct LayoutBuilder {
    slices: Vec<NamedSlice>,
    total: usize,
    ops: Vec<Op>,
    bn_widths: Vec<usize>,
    dense_count: usize,
}

impl LayoutBuilder {
    fn new() -> Self {
        LayoutBuilder { slices: Vec::new(), total: 0, ops: Vec::new(), bn_widths: Vec::new(), dense_count: 0 }
    }

    fn slice(&mut self, name: String, len: usize) -> usize {
        self.slices.push(NamedSlice { name, offset: self.total, len });
        self.total += len;
        self.slices.len() - 1
    }

    fn dense(&mut self, in_w: usize, out_w: usize) {
        let i = self.dense_count;
        self.dense_count += 1;
        let w = self.slice(format!("dense{i}.w"), in_w * out_w);
        let b = self.slice(format!("dense{i}.b"), out_w);
        self.ops.push(Op::Dense { w, b, in_w, out_w });
    }

    fn batchnorm(&mut self, width: usize) {
        let j = self.bn_widths.len();
        let gamma = self.slice(format!("bn{j}.gamma"), width);
        let beta = self.slice(format!("bn{j}.beta"), width);
        self.bn_widths.push(width);
        self.ops.push(Op::BatchNorm { gamma, beta, bn: j });
    }
}

fn build_layout(arch: &ArchSpec) -> Result<LayoutBuilder> {
    arch.validate()?;
    let mut b = LayoutBuilder::new();
    match &arch.kind {
        ArchKind::Residual { width, blocks } => {
            b.dense(arch.input_width, *width);
            for _ in 0..*blocks {
                b.ops.push(Op::SkipStart);
                b.dense(*width, *width);
                b.batchnorm(*width);
                b.ops.push(Op::Silu);
                b.dense(*width, *width);
                b.batchnorm(*width);
                b.ops.push(Op::SkipAdd);
                b.ops.push(Op::Silu);
            }
            b.dense(*width, arch.output_width);
        }
        ArchKind::AutoEncoder { widths } => {
            let mut prev = arch.input_width;
            for &w in widths {
                b.dense(prev, w);
                b.batchnorm(w);
                b.ops.push(Op::Silu);
                prev = w;
            }
            b.dense(prev, arch.output_width);
        }
    }
    Ok(b)
}

/// Trainable parameter count implied by an architecture.
pub fn param_count(arch: &ArchSpec) -> Result<usize> {
    Ok(build_layout(arch)?.total)
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// A materialized model: architecture, flat trainable parameters with
/// named slices, and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: ArchSpec,
    pub params: Vec<f64>,
    pub slices: Vec<NamedSlice>,
    pub bn: Vec<BnRunning>,
    ops: Vec<Op>,
}

impl Network {
    /// Fresh network with fan-in-scaled uniform dense weights
    /// (U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero), BN gamma = 1,
    /// beta = 0, running mean 0 / variance 1. Draw order is slice order,
    /// so a fixed seed reproduces the exact same initialization.
    pub fn init(arch: &ArchSpec, seed: u64) -> Result<Self> {
        let layout = build_layout(arch)?;
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in &layout.ops {
            match *op {
                Op::Dense { w, in_w, .. } => {
                    let bound = 1.0 / (in_w as f64).sqrt();
                    let s = &layout.slices[w];
                    for p in params[s.offset..s.offset + s.len].iter_mut() {
                        *p = bound * (2.0 * rng.gen::<f64>() - 1.0);
                    }
                    // biases stay zero
                }
                Op::BatchNorm { gamma, .. } => {
                    let s = &layout.slices[gamma];
                    params[s.offset..s.offset + s.len].fill(1.0);
                    // betas stay zero
                }
                _ => {}
            }
        }
        Ok(Network {
            arch: arch.clone(),
            params,
            slices: layout.slices,
            bn: layout.bn_widths.iter().map(|&w| BnRunning::identity(w)).collect(),
            ops: layout.ops,
        })
    }

    pub fn param_slice(&self, idx: usize) -> &[f64] {
        let s = &self.slices[idx];
        &self.params[s.offset..s.offset + s.len]
    }

    fn weight_matrix(&self, idx: usize, in_w: usize, out_w: usize) -> Matrix {
        Matrix::from_vec(in_w, out_w, self.param_slice(idx).to_vec())
    }

    /// Batched forward pass. Train mode uses and updates batch-norm batch
    /// statistics; eval mode is a pure function of (params, input).
    /// Returns per-example scalar predictions.
    pub fn forward_batch(&mut self, x: &Matrix, mode: Mode) -> Result<Vec<f64>> {
        let (out, _) = self.forward_internal(x, mode, false)?;
        Ok(out.data)
    }

    /// Train-mode forward keeping everything backward needs.
    pub fn forward_train_cached(&mut self, x: &Matrix) -> Result<(Vec<f64>, TapeCache)> {
        let (out, cache) = self.forward_internal(x, Mode::Train, true)?;
        Ok((out.data, cache))
    }

    fn forward_internal(
        &mut self,
        x: &Matrix,
        mode: Mode,
        want_cache: bool,
    ) -> Result<(Matrix, TapeCache)> {
        if x.cols != self.arch.input_width {
            return Err(Error::WrongInputWidth { expected: self.arch.input_width, got: x.cols });
        }
        let mut cache = TapeCache { per_op: Vec::new() };
        let mut cur = x.clone();
        let mut skips: Vec<Matrix> = Vec::new();
        for op in self.ops.clone() {
            let mut entry = OpCache::default();
            match op {
                Op::Dense { w, b, in_w, out_w } => {
                    if want_cache {
                        entry.input = Some(cur.clone());
                    }
                    let wm = self.weight_matrix(w, in_w, out_w);
                    let mut y = cur.matmul(&wm);
                    let bias = self.param_slice(b).to_vec();
                    for i in 0..y.rows {
                        for (v, bb) in y.row_mut(i).iter_mut().zip(&bias) {
                            *v += bb;
                        }
                    }
                    cur = y;
                }
                Op::BatchNorm { gamma, beta, bn } => {
                    let gamma_v = self.param_slice(gamma).to_vec();
                    let beta_v = self.param_slice(beta).to_vec();
                    match mode {
                        Mode::Train => {
                            let (y, bn_cache) =
                                bn_forward_train(&cur, &gamma_v, &beta_v, &mut self.bn[bn])?;
                            if want_cache {
                                entry.bn = Some(bn_cache);
                            }
                            cur = y;
                        }
                        Mode::Eval => {
                            cur = bn_forward_eval(&cur, &gamma_v, &beta_v, &self.bn[bn]);
                        }
                    }
                }
                Op::Silu => {
                    if want_cache {
                        entry.input = Some(cur.clone());
                    }
                    cur = silu_forward(&cur);
                }
                Op::SkipStart => {
                    skips.push(cur.clone());
                }
                Op::SkipAdd => {
                    let skip = skips.pop().expect("skip stack underflow");
                    for (v, s) in cur.data.iter_mut().zip(skip.data.iter()) {
                        *v += s;
                    }
                }
            }
            if want_cache {
                cache.per_op.push(entry);
            }
        }
        Ok((cur, cache))
    }

    /// Gradients of a scalar loss w.r.t. every trainable parameter, given
    /// the loss gradient at the output (one value per example).
    pub fn backward(&self, cache: &TapeCache, d_out: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut dcur = Matrix::from_vec(d_out.len(), 1, d_out.to_vec());
        let mut skip_grads: Vec<Matrix> = Vec::new();
        for (idx, op) in self.ops.iter().enumerate().rev() {
            let entry = &cache.per_op[idx];
            match *op {
                Op::Dense { w, b, in_w, out_w } => {
                    let x = entry.input.as_ref().expect("dense cache");
                    let wm = self.weight_matrix(w, in_w, out_w);
                    let dw = x.matmul_at(&dcur);
                    let ws = &self.slices[w];
                    grads[ws.offset..ws.offset + ws.len].copy_from_slice(&dw.data);
                    let bs = &self.slices[b];
                    for i in 0..dcur.rows {
                        for (g, d) in grads[bs.offset..bs.offset + bs.len]
                            .iter_mut()
                            .zip(dcur.row(i))
                        {
                            *g += d;
                        }
                    }
                    dcur = dcur.matmul_bt(&wm);
                }
                Op::BatchNorm { gamma, beta, .. } => {
                    let bn_cache: &BnCache = entry.bn.as_ref().expect("bn cache");
                    let gamma_v = self.param_slice(gamma);
                    let (dx, dgamma, dbeta) = bn_backward(&dcur, gamma_v, bn_cache);
                    let gs = &self.slices[gamma];
                    grads[gs.offset..gs.offset + gs.len].copy_from_slice(&dgamma);
                    let bs = &self.slices[beta];
                    grads[bs.offset..bs.offset + bs.len].copy_from_slice(&dbeta);
                    dcur = dx;
                }
                Op::Silu => {
                    let x = entry.input.as_ref().expect("silu cache");
                    dcur = silu_backward(x, &dcur);
                }
                Op::SkipAdd => {
                    skip_grads.push(dcur.clone());
                }
                Op::SkipStart => {
                    let sg = skip_grads.pop().expect("skip grad underflow");
                    for (v, s) in dcur.data.iter_mut().zip(sg.data.iter()) {
                        *v += s;
                    }
                }
            }
        }
        grads
    }
}

#[derive(Debug, Default)]
pub struct OpCache {
    input: Option<Matrix>,
    bn: Option<BnCache>,
}

/// Per-op forward state retained for the backward pass.
#[derive(Debug)]
pub struct TapeCache {
    per_op: Vec<OpCache>,
}
