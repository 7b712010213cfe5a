//! From-scratch dense network stack: SiLU, batch normalization, MSE, Adam,
//! residual and autoencoder architectures, the training loop, sequence
//! prediction, and numerical gradient verification.
//!
//! Training is deterministic for a fixed seed: initialization, epoch
//! shuffles, and every reduction use fixed orders, so one platform
//! reproduces a run bit-for-bit.

mod layers;
mod linalg;
mod network;

pub use layers::{
    bn_forward_eval, bn_forward_train, mse, mse_grad, silu, silu_derivative, BnRunning, Mode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use linalg::Matrix;
pub use network::{param_count, ArchKind, ArchSpec, NamedSlice, Network};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::pipeline::{NormStats, WindowedDataset};
use crate::seed;
use crate::siggen::Waveform;

// ---------------------------------------------------------------------------
// Training configuration and Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size >= 2
            && self.epochs >= 1
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain("invalid training configuration".into()))
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One Adam update with bias correction:
///
/// ```text
/// m = b1*m + (1-b1)*g        v = b2*v + (1-b2)*g^2
/// m_hat = m/(1-b1^t)         v_hat = v/(1-b2^t)
/// p -= lr * m_hat / (sqrt(v_hat) + eps)
/// ```
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::LengthMismatch { left: params.len(), right: grads.len() });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            epoch: 0,
            detail: format!("non-finite gradient at step {}", state.t + 1),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Model artifact
// ---------------------------------------------------------------------------

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Trained network in serializable form: architecture, one flat parameter
/// vector with named slices (dense weights/biases, BN gamma/beta, BN
/// running mean/variance), the normalization statistics frozen at training
/// time, and the per-epoch history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub arch: ArchSpec,
    pub slices: Vec<NamedSlice>,
    pub parameters: Vec<f64>,
    pub norm_stats: NormStats,
    pub history: Vec<EpochStats>,
}

impl ModelArtifact {
    fn from_network(net: &Network, norm_stats: NormStats, history: Vec<EpochStats>) -> Self {
        let mut parameters = net.params.clone();
        let mut slices = net.slices.clone();
        for (j, bn) in net.bn.iter().enumerate() {
            slices.push(NamedSlice {
                name: format!("bn{j}.running_mean"),
                offset: parameters.len(),
                len: bn.mean.len(),
            });
            parameters.extend_from_slice(&bn.mean);
            slices.push(NamedSlice {
                name: format!("bn{j}.running_var"),
                offset: parameters.len(),
                len: bn.var.len(),
            });
            parameters.extend_from_slice(&bn.var);
        }
        ModelArtifact {
            version: ARTIFACT_VERSION,
            arch: net.arch.clone(),
            slices,
            parameters,
            norm_stats,
            history,
        }
    }

    /// Rebuild the runnable network, validating the layout on the way.
    pub fn to_network(&self) -> Result<Network> {
        self.validate()?;
        let mut net = Network::init(&self.arch, 0)?;
        let trainable = net.params.len();
        net.params.copy_from_slice(&self.parameters[..trainable]);
        let mut off = trainable;
        for bn in net.bn.iter_mut() {
            let w = bn.mean.len();
            bn.mean.copy_from_slice(&self.parameters[off..off + w]);
            off += w;
            bn.var.copy_from_slice(&self.parameters[off..off + w]);
            off += w;
        }
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != ARTIFACT_VERSION {
            return Err(Error::Domain(format!("unsupported artifact version {}", self.version)));
        }
        let trainable = param_count(&self.arch)?;
        let total: usize = self.slices.iter().map(|s| s.len).sum();
        if total != self.parameters.len() || trainable > total {
            return Err(Error::Domain(format!(
                "parameter vector length {} does not match architecture (expected {total})",
                self.parameters.len()
            )));
        }
        for s in &self.slices {
            if s.name.ends_with("running_var")
                && self.parameters[s.offset..s.offset + s.len].iter().any(|&v| v <= 0.0)
            {
                return Err(Error::Domain(format!("{} has non-positive entries", s.name)));
            }
        }
        if !(self.norm_stats.in_max > self.norm_stats.in_min
            && self.norm_stats.out_max > self.norm_stats.out_min)
        {
            return Err(Error::Domain("degenerate normalization statistics".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Domain(format!("artifact serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let artifact: ModelArtifact = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        artifact.validate()?;
        Ok(artifact)
    }
}

/// Single-window forward pass through a model artifact.
///
/// Eval mode is a pure function of (parameters, window). Train mode fails
/// on a single window because batch normalization has no batch statistics.
pub fn forward(model: &ModelArtifact, window: &[f64], mode: Mode) -> Result<f64> {
    if window.len() != model.arch.input_width {
        return Err(Error::WrongInputWidth {
            expected: model.arch.input_width,
            got: window.len(),
        });
    }
    let mut net = model.to_network()?;
    let x = Matrix::from_vec(1, window.len(), window.to_vec());
    Ok(net.forward_batch(&x, mode)?[0])
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

fn gather_batch(ds: &WindowedDataset, idxs: &[usize]) -> (Matrix, Vec<f64>) {
    let w = ds.window;
    let mut x = Matrix::zeros(idxs.len(), w);
    let mut y = Vec::with_capacity(idxs.len());
    for (r, &i) in idxs.iter().enumerate() {
        x.row_mut(r).copy_from_slice(ds.input_row(i));
        y.push(ds.targets[i]);
    }
    (x, y)
}

/// Eval-mode MSE of a network over a whole dataset, in fixed-order chunks.
fn network_mse(net: &mut Network, ds: &WindowedDataset) -> Result<f64> {
    let mut sq_sum = 0.0;
    let chunk = 1024;
    let mut i = 0;
    while i < ds.len() {
        let hi = (i + chunk).min(ds.len());
        let idxs: Vec<usize> = (i..hi).collect();
        let (x, y) = gather_batch(ds, &idxs);
        let pred = net.forward_batch(&x, Mode::Eval)?;
        for (p, t) in pred.iter().zip(y.iter()) {
            sq_sum += (p - t) * (p - t);
        }
        i = hi;
    }
    Ok(sq_sum / ds.len() as f64)
}

/// Eval-mode MSE of a trained artifact over a dataset (e.g. the band-noise
/// test set).
pub fn dataset_mse(model: &ModelArtifact, ds: &WindowedDataset) -> Result<f64> {
    network_mse(&mut model.to_network()?, ds)
}

/// Train on shuffled mini-batches, tracking train/val MSE per epoch, and
/// return the parameters from the epoch with the lowest validation MSE.
///
/// The final short batch of an epoch is kept if it still has at least two
/// examples (batch normalization needs batch statistics) and dropped
/// otherwise.
pub fn train(
    arch: &ArchSpec,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    norm_stats: NormStats,
    cfg: &TrainConfig,
) -> Result<ModelArtifact> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyRequest);
    }
    if train_set.window != arch.input_width || val_set.window != arch.input_width {
        return Err(Error::WrongInputWidth {
            expected: arch.input_width,
            got: train_set.window,
        });
    }

    let mut net = Network::init(arch, seed::split(cfg.seed, 0))?;
    let mut adam = AdamState::zeros(net.params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>, Vec<BnRunning>)> = None;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed::split(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let (x, y) = gather_batch(train_set, batch);
            let (pred, cache) = net.forward_train_cached(&x)?;
            let loss = mse(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite training loss {loss}"),
                });
            }
            let dpred = mse_grad(&pred, &y)?;
            let grads = net.backward(&cache, &dpred);
            adam_step(&mut net.params, &grads, &mut adam, cfg).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { epoch, detail },
                other => other,
            })?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }

        let train_mse = loss_sum / seen as f64;
        let val_mse = network_mse(&mut net, val_set)?;
        if !val_mse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("non-finite validation loss {val_mse}"),
            });
        }
        history.push(EpochStats { epoch, train_mse, val_mse });
        if best.as_ref().map_or(true, |(b, _, _)| val_mse < *b) {
            best = Some((val_mse, net.params.clone(), net.bn.clone()));
        }
    }

    let (_, best_params, best_bn) = best.expect("at least one epoch ran");
    net.params = best_params;
    net.bn = best_bn;
    Ok(ModelArtifact::from_network(&net, norm_stats, history))
}

// ---------------------------------------------------------------------------
// Sequence prediction
// ---------------------------------------------------------------------------

/// Slide the input window over the measured stimulus (never over model
/// outputs), predict each of `n` consecutive points starting at `start`,
/// and de-normalize through the stored statistics.
pub fn predict_sequence(
    model: &ModelArtifact,
    stimulus: &Waveform,
    n: usize,
    start: usize,
) -> Result<Waveform> {
    let w = model.arch.input_width;
    if start + 1 < w || start + n > stimulus.len() {
        return Err(Error::InsufficientLength {
            needed: (w - 1).max(start + n),
            got: stimulus.len(),
        });
    }
    let stats = model.norm_stats;
    let mut net = model.to_network()?;
    let mut out = Vec::with_capacity(n);
    let chunk = 512;
    let mut k = 0;
    while k < n {
        let rows = chunk.min(n - k);
        let mut x = Matrix::zeros(rows, w);
        for r in 0..rows {
            let center = start + k + r;
            for (dst, src) in x
                .row_mut(r)
                .iter_mut()
                .zip(&stimulus.samples[center + 1 - w..=center])
            {
                *dst = stats.apply_input(*src);
            }
        }
        let pred = net.forward_batch(&x, Mode::Eval)?;
        out.extend(pred.iter().map(|&p| stats.invert_output(p)));
        k += rows;
    }
    Ok(Waveform::new(out, stimulus.sample_rate_hz))
}

impl Predictor for ModelArtifact {
    fn warmup(&self) -> usize {
        self.arch.input_width - 1
    }

    fn predict(&self, stimulus: &Waveform, n: usize, start: usize) -> Result<Waveform> {
        predict_sequence(self, stimulus, n, start)
    }
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

/// Compare analytic backprop against central finite differences for every
/// trainable parameter of a small seeded model on a small random batch.
/// Returns the maximum relative error, where the denominator is floored at
/// 1e-4 so that finite-difference roundoff on near-zero gradients is
/// measured absolutely instead of against itself.
pub fn grad_check(arch: &ArchSpec, eps: f64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    let batch = 4;
    let mut net = Network::init(arch, 99)?;
    let x = Matrix::from_vec(
        batch,
        arch.input_width,
        (0..batch * arch.input_width).map(|_| rng.gen::<f64>()).collect(),
    );
    let y: Vec<f64> = (0..batch).map(|_| rng.gen::<f64>()).collect();

    let (pred, cache) = net.forward_train_cached(&x)?;
    let dpred = mse_grad(&pred, &y)?;
    let analytic = net.backward(&cache, &dpred);

    let mut max_rel = 0.0f64;
    for i in 0..net.params.len() {
        let orig = net.params[i];
        net.params[i] = orig + eps;
        let (pred_p, _) = net.forward_train_cached(&x)?;
        let loss_p = mse(&pred_p, &y)?;
        net.params[i] = orig - eps;
        let (pred_m, _) = net.forward_train_cached(&x)?;
        let loss_m = mse(&pred_m, &y)?;
        net.params[i] = orig;
        let numeric = (loss_p - loss_m) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs()
            / analytic[i].abs().max(numeric.abs()).max(1e-4);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
