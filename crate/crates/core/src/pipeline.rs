//! Preprocessing: delay compensation, normalization, and window
//! extraction, turning raw capture pairs into training-ready datasets.
//!
//! # Window convention
//!
//! The input window for a target at index `n` covers the stimulus samples
//! `[n - window + 1, n]` inclusive of the current sample, and the target is
//! the response at `n`. A physical amplifier's instantaneous output depends
//! on its instantaneous input, so `x[n]` belongs in the window. Every
//! downstream number depends on this convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::siggen::Waveform;
use crate::testbench::CapturePair;

// ---------------------------------------------------------------------------
// Delay compensation
// ---------------------------------------------------------------------------

/// Cross-correlation peak between a stimulus and a response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    /// Response lag in samples; positive means the response is late.
    pub lag: i64,
    /// Sign of the correlation at the peak; -1 for an inverting device.
    pub sign: i8,
    /// Peak of |R_xy| / N.
    pub peak: f64,
}

/// Locate the delay between `x` and `y` as the argmax of |R_xy(tau)| over
/// tau in [-max_lag, max_lag], with the biased zero-padded finite sum
/// `R_xy(tau) = (1/N) * sum_n x[n] * y[n+tau]`.
///
/// Exact peak ties resolve to the smallest |tau| (positive before
/// negative). The sign of R at the peak is reported so inverting devices
/// are recognized.
pub fn estimate_delay(x: &Waveform, y: &Waveform, max_lag: usize) -> Result<DelayEstimate> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 2 * max_lag {
        return Err(Error::InsufficientLength { needed: 2 * max_lag, got: n });
    }
    let xs = &x.samples;
    let ys = &y.samples;

    let corr_at = |tau: i64| -> f64 {
        let (xa, ya) = if tau >= 0 {
            let t = tau as usize;
            (&xs[..n - t], &ys[t..])
        } else {
            let t = (-tau) as usize;
            (&xs[t..], &ys[..n - t])
        };
        let sum: f64 = xa.iter().zip(ya.iter()).map(|(a, b)| a * b).sum();
        sum / n as f64
    };

    // Scan 0, +1, -1, +2, -2, ... so the first strictly-largest peak seen
    // is the smallest |tau|.
    let mut best_lag = 0i64;
    let mut best_val = corr_at(0);
    for t in 1..=max_lag as i64 {
        for tau in [t, -t] {
            let v = corr_at(tau);
            if v.abs() > best_val.abs() {
                best_val = v;
                best_lag = tau;
            }
        }
    }
    if best_val == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(DelayEstimate {
        lag: best_lag,
        sign: if best_val > 0.0 { 1 } else { -1 },
        peak: best_val.abs(),
    })
}

/// Shift the response back by `lag` and truncate both channels to the
/// overlapping region.
pub fn align(pair: &CapturePair, lag: i64) -> Result<CapturePair> {
    let n = pair.len() as i64;
    if lag.abs() >= n {
        return Err(Error::EmptyOverlap { lag, len: pair.len() });
    }
    let (stim, resp) = if lag >= 0 {
        let t = lag as usize;
        (
            pair.stimulus.samples[..pair.len() - t].to_vec(),
            pair.response.samples[t..].to_vec(),
        )
    } else {
        let t = (-lag) as usize;
        (
            pair.stimulus.samples[t..].to_vec(),
            pair.response.samples[..pair.len() - t].to_vec(),
        )
    };
    let fs = pair.stimulus.sample_rate_hz;
    CapturePair::new(Waveform::new(stim, fs), Waveform::new(resp, fs), pair.meta.clone())
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-channel min/max over the training captures. Fit once on training
/// data, frozen into the model artifact, and applied unchanged (and
/// unclamped) to everything that follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub in_min: f64,
    pub in_max: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl NormStats {
    pub fn apply_input(&self, v: f64) -> f64 {
        (v - self.in_min) / (self.in_max - self.in_min)
    }

    pub fn invert_input(&self, v: f64) -> f64 {
        v * (self.in_max - self.in_min) + self.in_min
    }

    pub fn apply_output(&self, v: f64) -> f64 {
        (v - self.out_min) / (self.out_max - self.out_min)
    }

    pub fn invert_output(&self, v: f64) -> f64 {
        v * (self.out_max - self.out_min) + self.out_min
    }
}

/// Global per-channel min/max over all training captures.
pub fn fit_norm_stats(training_pairs: &[CapturePair]) -> Result<NormStats> {
    if training_pairs.is_empty() {
        return Err(Error::EmptyRequest);
    }
    let mut stats = NormStats {
        in_min: f64::INFINITY,
        in_max: f64::NEG_INFINITY,
        out_min: f64::INFINITY,
        out_max: f64::NEG_INFINITY,
    };
    for pair in training_pairs {
        for &v in &pair.stimulus.samples {
            stats.in_min = stats.in_min.min(v);
            stats.in_max = stats.in_max.max(v);
        }
        for &v in &pair.response.samples {
            stats.out_min = stats.out_min.min(v);
            stats.out_max = stats.out_max.max(v);
        }
    }
    if stats.in_max <= stats.in_min {
        return Err(Error::DegenerateRange { channel: "input", value: stats.in_min });
    }
    if stats.out_max <= stats.out_min {
        return Err(Error::DegenerateRange { channel: "output", value: stats.out_min });
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Windowed dataset
// ---------------------------------------------------------------------------

/// Normalized (window -> scalar) examples, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window: usize,
    /// `len * window` input values, row-major.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Capture index each example came from.
    pub source: Vec<u32>,
}

impl WindowedDataset {
    pub fn empty(window: usize) -> Self {
        WindowedDataset { window, inputs: Vec::new(), targets: Vec::new(), source: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.window..(i + 1) * self.window]
    }

    /// Append another dataset with the same window width.
    pub fn extend(&mut self, other: &WindowedDataset) -> Result<()> {
        if other.window != self.window {
            return Err(Error::LengthMismatch { left: self.window, right: other.window });
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        self.source.extend_from_slice(&other.source);
        Ok(())
    }

    /// Binary layout: `RFNWDS1\n`, then window and example count as u64 LE,
    /// then one row per example of `window + 1` f64 LE values (window
    /// first, target last), then the per-example capture indices as u32 LE.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.len() * (self.window + 1) * 8);
        buf.extend_from_slice(b"RFNWDS1\n");
        buf.extend_from_slice(&(self.window as u64).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            for v in self.input_row(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&self.targets[i].to_le_bytes());
        }
        for s in &self.source {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |msg: &str| Error::parse(path, 0, msg);
        if bytes.len() < 24 || &bytes[..8] != b"RFNWDS1\n" {
            return Err(fail("bad magic"));
        }
        let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let window = u64_at(8) as usize;
        let count = u64_at(16) as usize;
        let rows_bytes = count * (window + 1) * 8;
        if bytes.len() != 24 + rows_bytes + count * 4 {
            return Err(fail("truncated dataset file"));
        }
        let mut inputs = Vec::with_capacity(count * window);
        let mut targets = Vec::with_capacity(count);
        let mut off = 24;
        for _ in 0..count {
            for _ in 0..window {
                inputs.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
                off += 8;
            }
            targets.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        let mut source = Vec::with_capacity(count);
        for _ in 0..count {
            source.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
            off += 4;
        }
        Ok(WindowedDataset { window, inputs, targets, source })
    }
}

/// Draw `count` target indices without replacement and emit normalized
/// (window, target) examples. Input windows read only the stimulus
/// channel; the response is read only at target indices.
pub fn extract_windows(
    pair: &CapturePair,
    stats: &NormStats,
    window: usize,
    count: usize,
    seed: u64,
) -> Result<WindowedDataset> {
    let usable = pair.len().saturating_sub(window - 1);
    if usable == 0 || pair.len() < window + 1 {
        return Err(Error::InsufficientLength { needed: window + 1, got: pair.len() });
    }
    if count > usable {
        return Err(Error::InsufficientLength { needed: count, got: usable });
    }

    // Partial Fisher-Yates over the usable index range.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (window - 1..pair.len()).collect();
    for i in 0..count {
        let j = i + rng.gen_range(0..indices.len() - i);
        indices.swap(i, j);
    }
    indices.truncate(count);

    let mut ds = WindowedDataset::empty(window);
    ds.inputs.reserve(count * window);
    for &n in &indices {
        ds.inputs.extend(
            pair.stimulus.samples[n + 1 - window..=n]
                .iter()
                .map(|&v| stats.apply_input(v)),
        );
        ds.targets.push(stats.apply_output(pair.response.samples[n]));
        ds.source.push(pair.meta.capture_index);
    }
    Ok(ds)
}
