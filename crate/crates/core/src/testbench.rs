//! Simulated acquisition rig: drive a device with a stimulus, capture both
//! channels, and read/write oscilloscope-style CSV files.
//!
//! # Capture CSV format
//!
//! ```text
//! # capture v1
//! # sample_rate_hz=<17-significant-digit float>
//! # kind=<uniform_noise|band_noise|sine|dual_tone|unknown>
//! # amplitude_v=<float>
//! # descriptor=<none|band=lo:hi|tone=f|tones=f1:f2>
//! # seed=<u64>
//! # capture_index=<u32>
//! time_s,ch1_v,ch2_v
//! <t>,<stimulus>,<response>
//! ```
//!
//! ch1 is the stimulus, ch2 the device response. Samples are written as
//! decimal text with 17 significant digits, which round-trips every finite
//! f64 bit-exactly. The `#` metadata lines are optional on read: a bare
//! three-column file with the `time_s,ch1_v,ch2_v` header is accepted and
//! its sample rate inferred from the (uniform) time step.
//!
//! # Manifest format
//!
//! Tab-separated, one line per capture after the header:
//!
//! ```text
//! capture_index	kind	amplitude_v	descriptor	seed	path
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dutsim::{simulate, DutSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::siggen::{self, BandSpec, ToneSpec, Waveform};

// ---------------------------------------------------------------------------
// Capture types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    UniformNoise,
    BandNoise,
    Sine,
    DualTone,
    /// Externally authored file without metadata.
    Unknown,
}

impl fmt::Display for WaveformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WaveformKind::UniformNoise => "uniform_noise",
            WaveformKind::BandNoise => "band_noise",
            WaveformKind::Sine => "sine",
            WaveformKind::DualTone => "dual_tone",
            WaveformKind::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for WaveformKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "uniform_noise" => WaveformKind::UniformNoise,
            "band_noise" => WaveformKind::BandNoise,
            "sine" => WaveformKind::Sine,
            "dual_tone" => WaveformKind::DualTone,
            "unknown" => WaveformKind::Unknown,
            other => return Err(format!("unknown waveform kind `{other}`")),
        })
    }
}

/// Frequency parameters of a capture, when it has any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Descriptor {
    None,
    Band { f_start_hz: f64, f_end_hz: f64 },
    Tone { f_hz: f64 },
    Tones { f1_hz: f64, f2_hz: f64 },
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Descriptor::None => write!(f, "none"),
            Descriptor::Band { f_start_hz, f_end_hz } => {
                write!(f, "band={}:{}", fmt_f64(*f_start_hz), fmt_f64(*f_end_hz))
            }
            Descriptor::Tone { f_hz } => write!(f, "tone={}", fmt_f64(*f_hz)),
            Descriptor::Tones { f1_hz, f2_hz } => {
                write!(f, "tones={}:{}", fmt_f64(*f1_hz), fmt_f64(*f2_hz))
            }
        }
    }
}

impl std::str::FromStr for Descriptor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            return Ok(Descriptor::None);
        }
        let (tag, rest) = s.split_once('=').ok_or_else(|| format!("bad descriptor `{s}`"))?;
        let parse = |v: &str| v.parse::<f64>().map_err(|e| format!("bad descriptor `{s}`: {e}"));
        match tag {
            "tone" => Ok(Descriptor::Tone { f_hz: parse(rest)? }),
            "band" | "tones" => {
                let (a, b) = rest
                    .split_once(':')
                    .ok_or_else(|| format!("bad descriptor `{s}`"))?;
                let (a, b) = (parse(a)?, parse(b)?);
                Ok(if tag == "band" {
                    Descriptor::Band { f_start_hz: a, f_end_hz: b }
                } else {
                    Descriptor::Tones { f1_hz: a, f2_hz: b }
                })
            }
            _ => Err(format!("bad descriptor `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub waveform_kind: WaveformKind,
    pub amplitude_v: f64,
    pub descriptor: Descriptor,
    pub seed: u64,
    pub capture_index: u32,
}

impl CaptureMeta {
    pub fn unknown() -> Self {
        CaptureMeta {
            waveform_kind: WaveformKind::Unknown,
            amplitude_v: 0.0,
            descriptor: Descriptor::None,
            seed: 0,
            capture_index: 0,
        }
    }
}

/// Aligned (stimulus, response) pair with acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturePair {
    pub stimulus: Waveform,
    pub response: Waveform,
    pub meta: CaptureMeta,
}

impl CapturePair {
    pub fn new(stimulus: Waveform, response: Waveform, meta: CaptureMeta) -> Result<Self> {
        if stimulus.len() != response.len() {
            return Err(Error::LengthMismatch { left: stimulus.len(), right: response.len() });
        }
        if stimulus.sample_rate_hz != response.sample_rate_hz {
            return Err(Error::Domain("stimulus and response sample rates differ".into()));
        }
        Ok(CapturePair { stimulus, response, meta })
    }

    pub fn len(&self) -> usize {
        self.stimulus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimulus.is_empty()
    }
}

/// Single acquisition: simulate the device on `stimulus` (noise seeded
/// from `meta.seed`) and package both channels.
pub fn acquire(dut: &DutSpec, stimulus: Waveform, meta: CaptureMeta) -> Result<CapturePair> {
    let response = simulate(dut, &stimulus, meta.seed)?;
    CapturePair::new(stimulus, response, meta)
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

/// 17 significant digits: enough to reproduce any finite f64 bit-exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_capture_csv(pair: &CapturePair, path: &Path) -> Result<()> {
    let mut buf = String::with_capacity(pair.len() * 64 + 256);
    buf.push_str("# capture v1\n");
    buf.push_str(&format!("# sample_rate_hz={}\n", fmt_f64(pair.stimulus.sample_rate_hz)));
    buf.push_str(&format!("# kind={}\n", pair.meta.waveform_kind));
    buf.push_str(&format!("# amplitude_v={}\n", fmt_f64(pair.meta.amplitude_v)));
    buf.push_str(&format!("# descriptor={}\n", pair.meta.descriptor));
    buf.push_str(&format!("# seed={}\n", pair.meta.seed));
    buf.push_str(&format!("# capture_index={}\n", pair.meta.capture_index));
    buf.push_str("time_s,ch1_v,ch2_v\n");
    let dt = 1.0 / pair.stimulus.sample_rate_hz;
    for (k, (s, r)) in pair
        .stimulus
        .samples
        .iter()
        .zip(pair.response.samples.iter())
        .enumerate()
    {
        buf.push_str(&fmt_f64(k as f64 * dt));
        buf.push(',');
        buf.push_str(&fmt_f64(*s));
        buf.push(',');
        buf.push_str(&fmt_f64(*r));
        buf.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_capture_csv(path: &Path) -> Result<CapturePair> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = CaptureMeta::unknown();
    let mut declared_fs: Option<f64> = None;
    let mut header_seen = false;
    let mut times = Vec::new();
    let mut ch1 = Vec::new();
    let mut ch2 = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, value)) = rest.split_once('=') {
                match key.trim() {
                    "sample_rate_hz" => {
                        declared_fs = Some(parse_field(path, lineno, value.trim())?)
                    }
                    "kind" => {
                        meta.waveform_kind = value
                            .trim()
                            .parse()
                            .map_err(|e: String| Error::parse(path, lineno, e))?
                    }
                    "amplitude_v" => meta.amplitude_v = parse_field(path, lineno, value.trim())?,
                    "descriptor" => {
                        meta.descriptor = value
                            .trim()
                            .parse()
                            .map_err(|e: String| Error::parse(path, lineno, e))?
                    }
                    "seed" => {
                        meta.seed = value.trim().parse().map_err(|e| {
                            Error::parse(path, lineno, format!("bad seed: {e}"))
                        })?
                    }
                    "capture_index" => {
                        meta.capture_index = value.trim().parse().map_err(|e| {
                            Error::parse(path, lineno, format!("bad capture_index: {e}"))
                        })?
                    }
                    _ => {} // unknown metadata is ignored
                }
            }
            continue;
        }
        if !header_seen {
            if line != "time_s,ch1_v,ch2_v" {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected header `time_s,ch1_v,ch2_v`, found `{line}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let mut cells = line.split(',');
        let (t, a, b) = match (cells.next(), cells.next(), cells.next(), cells.next()) {
            (Some(t), Some(a), Some(b), None) => (t, a, b),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 3 comma-separated cells, found `{line}`"),
                ))
            }
        };
        times.push(parse_field(path, lineno, t)?);
        ch1.push(parse_field(path, lineno, a)?);
        ch2.push(parse_field(path, lineno, b)?);
    }

    if !header_seen {
        return Err(Error::parse(path, 1, "missing `time_s,ch1_v,ch2_v` header"));
    }
    if times.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }

    let fs = match declared_fs {
        Some(fs) if fs > 0.0 => fs,
        Some(fs) => return Err(Error::parse(path, 1, format!("bad sample_rate_hz {fs}"))),
        None => {
            if times.len() < 2 {
                return Err(Error::parse(path, 1, "cannot infer sample rate from one row"));
            }
            let dt = times[1] - times[0];
            if dt <= 0.0 {
                return Err(Error::parse(path, 2, "time column must increase"));
            }
            1.0 / dt
        }
    };
    // Uniform-step check on the time column.
    let dt = 1.0 / fs;
    for (k, &t) in times.iter().enumerate() {
        let expect = times[0] + k as f64 * dt;
        if (t - expect).abs() > 1e-6 * dt {
            return Err(Error::parse(
                path,
                k + 1,
                format!("non-uniform time step at row {k}: {t} vs {expect}"),
            ));
        }
    }

    CapturePair::new(Waveform::new(ch1, fs), Waveform::new(ch2, fs), meta)
}

fn parse_field(path: &Path, lineno: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|e| Error::parse(path, lineno, format!("non-numeric cell `{cell}`: {e}")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, lineno, format!("non-finite cell `{cell}`")))
            }
        })
}

// ---------------------------------------------------------------------------
// Dataset plan
// ---------------------------------------------------------------------------

/// Uniform-noise group (the training class).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseGroupSpec {
    pub amplitude_vpp: f64,
    pub count: usize,
}

/// Band-limited noise split into `count` contiguous equal slices of
/// [f_start, f_end].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGroupSpec {
    pub amplitude_vpp: f64,
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub count: usize,
}

/// Single-tone sweep: `count` tones at k * f_max / count, k = 1..=count,
/// snapped to the evaluation FFT grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineSweepSpec {
    pub amplitude_vpp: f64,
    pub f_max_hz: f64,
    pub count: usize,
}

/// Dual-tone sweep: centers like the sine sweep, tones `spacing_bins`
/// apart on the evaluation FFT grid (per-tone amplitude = vpp/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualToneSweepSpec {
    pub amplitude_vpp: f64,
    pub f_center_max_hz: f64,
    pub count: usize,
    pub spacing_bins: usize,
}

/// Fixed-frequency amplitude sweep, linear in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpSweepSpec {
    pub f_hz: f64,
    pub start_dbm: f64,
    pub stop_dbm: f64,
    pub count: usize,
}

/// Full dataset recipe: one uniform-noise training group, a band-noise
/// time-domain test group, and the frequency-domain sweep groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub sample_rate_hz: f64,
    pub samples_per_file: usize,
    /// FFT length whose bin grid the sweep planner snaps to.
    pub eval_n_fft: usize,
    pub z_ohm: f64,
    pub training: NoiseGroupSpec,
    pub time_test: BandGroupSpec,
    pub sine_sweep: SineSweepSpec,
    pub dual_tone: DualToneSweepSpec,
    pub amp_sweeps: Vec<AmpSweepSpec>,
}

impl DatasetPlan {
    /// Desk-scale recipe shipped with the in-repo config: normalized
    /// fs = 1, 8192-sample files, 26 uniform-noise files (the training
    /// command splits them 20 train / 6 validation), 6 band slices, and
    /// 10-point sweeps. All frequencies are the full-scale recipe's scaled
    /// by the sample-rate ratio.
    pub fn desk_scale() -> Self {
        DatasetPlan {
            sample_rate_hz: 1.0,
            samples_per_file: 8192,
            eval_n_fft: 4096,
            z_ohm: 50.0,
            training: NoiseGroupSpec { amplitude_vpp: 1.2, count: 26 },
            time_test: BandGroupSpec {
                amplitude_vpp: 1.0,
                f_start_hz: 0.0,
                f_end_hz: 0.12,
                count: 6,
            },
            sine_sweep: SineSweepSpec { amplitude_vpp: 0.2, f_max_hz: 0.12, count: 10 },
            dual_tone: DualToneSweepSpec {
                amplitude_vpp: 0.2,
                f_center_max_hz: 0.08,
                count: 10,
                spacing_bins: 2,
            },
            amp_sweeps: vec![
                AmpSweepSpec { f_hz: 0.036, start_dbm: -20.0, stop_dbm: -5.0, count: 10 },
                AmpSweepSpec { f_hz: 0.076, start_dbm: -20.0, stop_dbm: -5.0, count: 10 },
            ],
        }
    }

    /// Full-scale recipe: 25 GHz capture rate, 50k-sample files, 300
    /// training files, 30 band slices over 0-3 GHz, 100-point sweeps to
    /// 3 GHz, dual tones 2 MHz apart, and two 100-point amplitude sweeps.
    pub fn full_scale() -> Self {
        DatasetPlan {
            sample_rate_hz: 25e9,
            samples_per_file: 50_000,
            eval_n_fft: 25_000,
            z_ohm: 50.0,
            training: NoiseGroupSpec { amplitude_vpp: 1.2, count: 300 },
            time_test: BandGroupSpec {
                amplitude_vpp: 1.0,
                f_start_hz: 0.0,
                f_end_hz: 3e9,
                count: 30,
            },
            sine_sweep: SineSweepSpec { amplitude_vpp: 0.2, f_max_hz: 3e9, count: 100 },
            dual_tone: DualToneSweepSpec {
                amplitude_vpp: 0.2,
                f_center_max_hz: 2e9,
                count: 100,
                spacing_bins: 2,
            },
            amp_sweeps: vec![
                AmpSweepSpec { f_hz: 0.9e9, start_dbm: -20.0, stop_dbm: -5.0, count: 100 },
                AmpSweepSpec { f_hz: 1.9e9, start_dbm: -20.0, stop_dbm: -5.0, count: 100 },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.sample_rate_hz <= 0.0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if self.samples_per_file < self.eval_n_fft {
            return bad(format!(
                "samples_per_file {} below eval_n_fft {}",
                self.samples_per_file, self.eval_n_fft
            ));
        }
        if self.training.count < 1
            || self.time_test.count < 1
            || self.sine_sweep.count < 1
            || self.dual_tone.count < 1
        {
            return bad("every group count must be >= 1".into());
        }
        if self.time_test.f_end_hz <= self.time_test.f_start_hz
            || self.time_test.f_end_hz > nyquist
        {
            return bad("band-noise group band is empty or exceeds Nyquist".into());
        }
        if self.sine_sweep.f_max_hz > nyquist || self.dual_tone.f_center_max_hz > nyquist {
            return bad("sweep extends past Nyquist".into());
        }
        if self.dual_tone.spacing_bins < 2 {
            return bad("dual-tone spacing must be at least 2 bins".into());
        }
        for a in &self.amp_sweeps {
            if a.count < 1 || a.f_hz >= nyquist || a.stop_dbm < a.start_dbm {
                return bad(format!("bad amplitude sweep at {} Hz", a.f_hz));
            }
        }
        Ok(())
    }

    /// Total capture count.
    pub fn total_files(&self) -> usize {
        self.training.count
            + self.time_test.count
            + self.sine_sweep.count
            + self.dual_tone.count
            + self.amp_sweeps.iter().map(|a| a.count).sum::<usize>()
    }
}

/// Snap a frequency onto the n_fft bin grid (bin 1 .. n_fft/2 - 1).
pub fn snap_to_bin(f_hz: f64, sample_rate_hz: f64, n_fft: usize) -> f64 {
    let k = (f_hz * n_fft as f64 / sample_rate_hz).round() as i64;
    let k = k.clamp(1, n_fft as i64 / 2 - 1);
    k as f64 * sample_rate_hz / n_fft as f64
}

/// Coherent sine-sweep frequencies for a plan.
pub fn sine_sweep_freqs(plan: &DatasetPlan) -> Result<Vec<f64>> {
    let spec = &plan.sine_sweep;
    let freqs: Vec<f64> = (1..=spec.count)
        .map(|k| {
            snap_to_bin(
                k as f64 * spec.f_max_hz / spec.count as f64,
                plan.sample_rate_hz,
                plan.eval_n_fft,
            )
        })
        .collect();
    if freqs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "sine sweep frequencies collide after bin snapping; reduce count or raise n_fft"
                .into(),
        ));
    }
    Ok(freqs)
}

/// Coherent dual-tone pairs; tones sit `spacing_bins` apart, centered on
/// the sweep grid, and the lower IM3 product is kept above DC.
pub fn dual_tone_pairs(plan: &DatasetPlan) -> Result<Vec<(f64, f64)>> {
    let spec = &plan.dual_tone;
    let n = plan.eval_n_fft;
    let df = plan.sample_rate_hz / n as f64;
    let half = (spec.spacing_bins as i64 + 1) / 2;
    let min_center = 3 * half + 1; // keeps 2*f1 - f2 strictly positive
    let mut pairs = Vec::with_capacity(spec.count);
    for k in 1..=spec.count {
        let center = k as f64 * spec.f_center_max_hz / spec.count as f64;
        let c = (center / df).round() as i64;
        let c = c.clamp(min_center, n as i64 / 2 - 1 - half);
        let f1 = (c - half) as f64 * df;
        let f2 = (c + half) as f64 * df;
        pairs.push((f1, f2));
    }
    if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::Domain(
            "dual-tone sweep centers collide after bin snapping".into(),
        ));
    }
    Ok(pairs)
}

/// Amplitude-sweep powers, linear in dBm.
pub fn amp_sweep_powers(spec: &AmpSweepSpec) -> Vec<f64> {
    if spec.count == 1 {
        return vec![spec.start_dbm];
    }
    (0..spec.count)
        .map(|i| {
            spec.start_dbm + (spec.stop_dbm - spec.start_dbm) * i as f64 / (spec.count - 1) as f64
        })
        .collect()
}

/// One planned capture, before any waveform is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCapture {
    pub index: u32,
    pub kind: WaveformKind,
    pub amplitude_v: f64,
    pub descriptor: Descriptor,
}

/// Expand a plan into its capture list, in manifest order: uniform noise,
/// band slices, sine sweep, dual-tone sweep, then the amplitude sweeps.
pub fn plan_captures(plan: &DatasetPlan) -> Result<Vec<PlannedCapture>> {
    plan.validate()?;
    let mut caps = Vec::with_capacity(plan.total_files());
    let mut push = |kind, amplitude_v, descriptor| {
        let index = caps.len() as u32;
        caps.push(PlannedCapture { index, kind, amplitude_v, descriptor });
    };

    for _ in 0..plan.training.count {
        push(
            WaveformKind::UniformNoise,
            plan.training.amplitude_vpp / 2.0,
            Descriptor::None,
        );
    }
    let slice_width =
        (plan.time_test.f_end_hz - plan.time_test.f_start_hz) / plan.time_test.count as f64;
    for i in 0..plan.time_test.count {
        let f_start_hz = plan.time_test.f_start_hz + i as f64 * slice_width;
        push(
            WaveformKind::BandNoise,
            plan.time_test.amplitude_vpp / 2.0,
            Descriptor::Band { f_start_hz, f_end_hz: f_start_hz + slice_width },
        );
    }
    for f_hz in sine_sweep_freqs(plan)? {
        push(WaveformKind::Sine, plan.sine_sweep.amplitude_vpp / 2.0, Descriptor::Tone { f_hz });
    }
    for (f1_hz, f2_hz) in dual_tone_pairs(plan)? {
        push(
            WaveformKind::DualTone,
            plan.dual_tone.amplitude_vpp / 2.0,
            Descriptor::Tones { f1_hz, f2_hz },
        );
    }
    for sweep in &plan.amp_sweeps {
        for p_dbm in amp_sweep_powers(sweep) {
            push(
                WaveformKind::Sine,
                siggen::dbm_to_amplitude(p_dbm, plan.z_ohm)?,
                Descriptor::Tone { f_hz: snap_to_bin(sweep.f_hz, plan.sample_rate_hz, plan.eval_n_fft) },
            );
        }
    }
    Ok(caps)
}

/// Generate the stimulus for one planned capture.
fn generate_stimulus(plan: &DatasetPlan, cap: &PlannedCapture, stim_seed: u64) -> Result<Waveform> {
    let n = plan.samples_per_file;
    let fs = plan.sample_rate_hz;
    match (cap.kind, cap.descriptor) {
        (WaveformKind::UniformNoise, _) => {
            siggen::gen_uniform_noise(n, cap.amplitude_v, fs, stim_seed)
        }
        (WaveformKind::BandNoise, Descriptor::Band { f_start_hz, f_end_hz }) => {
            let band = BandSpec::new(f_start_hz, f_end_hz)?;
            siggen::gen_narrowband_noise(n, band, cap.amplitude_v, fs, stim_seed)
        }
        (WaveformKind::Sine, Descriptor::Tone { f_hz }) => {
            siggen::gen_sine(n, ToneSpec::new(f_hz, cap.amplitude_v), fs)
        }
        (WaveformKind::DualTone, Descriptor::Tones { f1_hz, f2_hz }) => {
            siggen::gen_dual_tone(n, f1_hz, f2_hz, cap.amplitude_v, fs)
        }
        (kind, desc) => Err(Error::Domain(format!(
            "planned capture {} has kind {kind} with descriptor {desc}",
            cap.index
        ))),
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub capture_index: u32,
    pub kind: WaveformKind,
    pub amplitude_v: f64,
    pub descriptor: Descriptor,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "capture_index\tkind\tamplitude_v\tdescriptor\tseed\tpath";

pub fn write_manifest(entries: &[ManifestEntry], dir: &Path) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut buf = String::from(MANIFEST_HEADER);
    buf.push('\n');
    for e in entries {
        buf.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.capture_index,
            e.kind,
            fmt_f64(e.amplitude_v),
            e.descriptor,
            e.seed,
            e.path.display()
        ));
    }
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == MANIFEST_HEADER => {}
        _ => return Err(Error::parse(path, 1, "bad or missing manifest header")),
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 6 {
            return Err(Error::parse(path, lineno, format!("expected 6 columns, found {}", cells.len())));
        }
        let err = |e: String| Error::parse(path, lineno, e);
        entries.push(ManifestEntry {
            capture_index: cells[0].parse().map_err(|e| err(format!("bad index: {e}")))?,
            kind: cells[1].parse().map_err(err)?,
            amplitude_v: cells[2].parse().map_err(|e| err(format!("bad amplitude: {e}")))?,
            descriptor: cells[3].parse().map_err(err)?,
            seed: cells[4].parse().map_err(|e| err(format!("bad seed: {e}")))?,
            path: PathBuf::from(cells[5]),
        });
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Suite building
// ---------------------------------------------------------------------------

/// Build every capture in the plan under `out_dir` and write the manifest.
///
/// Each capture is generated independently from `(master_seed, index)`, so
/// the suite parallelizes across files and rebuilding with the same seed
/// reproduces every byte. Returns the manifest entries in index order.
pub fn build_dataset_suite(
    plan: &DatasetPlan,
    dut: &DutSpec,
    out_dir: &Path,
    master_seed: u64,
) -> Result<Vec<ManifestEntry>> {
    dut.validate()?;
    let caps = plan_captures(plan)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let entries: Result<Vec<ManifestEntry>> = caps
        .par_iter()
        .map(|cap| {
            let capture_seed = seed::split(master_seed, cap.index as u64);
            let stim_seed = seed::split(capture_seed, 0);
            let noise_seed = seed::split(capture_seed, 1);
            let stimulus = generate_stimulus(plan, cap, stim_seed)?;
            let meta = CaptureMeta {
                waveform_kind: cap.kind,
                amplitude_v: cap.amplitude_v,
                descriptor: cap.descriptor,
                seed: noise_seed,
                capture_index: cap.index,
            };
            let pair = acquire(dut, stimulus, meta)?;
            let file = format!("cap_{:04}_{}.csv", cap.index, cap.kind);
            write_capture_csv(&pair, &out_dir.join(&file))?;
            Ok(ManifestEntry {
                capture_index: cap.index,
                kind: cap.kind,
                amplitude_v: cap.amplitude_v,
                descriptor: cap.descriptor,
                seed: noise_seed,
                path: PathBuf::from(file),
            })
        })
        .collect();
    let mut entries = entries?;
    entries.sort_by_key(|e| e.capture_index);
    write_manifest(&entries, out_dir)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dut() -> DutSpec {
        DutSpec::memoryless(1.0, 0.0)
    }

    fn small_pair(seed: u64) -> CapturePair {
        let stim = siggen::gen_uniform_noise(128, 0.6, 1.0, seed).unwrap();
        let meta = CaptureMeta {
            waveform_kind: WaveformKind::UniformNoise,
            amplitude_v: 0.6,
            descriptor: Descriptor::None,
            seed,
            capture_index: 3,
        };
        acquire(&DutSpec::reference_amplifier(), stim, meta).unwrap()
    }

    #[test]
    fn acquire_identity_device_echoes_stimulus() {
        let stim = siggen::gen_uniform_noise(256, 0.5, 1.0, 1).unwrap();
        let pair = acquire(&identity_dut(), stim.clone(), CaptureMeta::unknown()).unwrap();
        assert_eq!(pair.stimulus, stim);
        assert_eq!(pair.response, stim);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.csv");
        let pair = small_pair(44);
        write_capture_csv(&pair, &path).unwrap();
        let back = read_capture_csv(&path).unwrap();
        assert_eq!(back, pair);
    }

    #[test]
    fn csv_rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_capture_csv(&small_pair(7), &p1).unwrap();
        write_capture_csv(&small_pair(7), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn bare_three_column_file_is_accepted_with_inferred_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.csv");
        fs::write(
            &path,
            "time_s,ch1_v,ch2_v\n0.0,1.0,2.0\n0.5,3.0,4.0\n1.0,5.0,6.0\n",
        )
        .unwrap();
        let pair = read_capture_csv(&path).unwrap();
        assert_eq!(pair.stimulus.sample_rate_hz, 2.0);
        assert_eq!(pair.stimulus.samples, vec![1.0, 3.0, 5.0]);
        assert_eq!(pair.response.samples, vec![2.0, 4.0, 6.0]);
        assert_eq!(pair.meta.waveform_kind, WaveformKind::Unknown);
    }

    #[test]
    fn ragged_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        fs::write(&path, "time_s,ch1_v,ch2_v\n0.0,1.0,2.0\n1.0,3.0\n").unwrap();
        match read_capture_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        fs::write(&path, "time_s,ch1_v,ch2_v\n0.0,1.0,2.0\n1.0,oops,4.0\n").unwrap();
        match read_capture_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn desk_scale_plan_arithmetic() {
        // 20 + 6 + 10 + 10 + 2*10 planned captures.
        let plan = DatasetPlan {
            training: NoiseGroupSpec { amplitude_vpp: 1.2, count: 20 },
            ..DatasetPlan::desk_scale()
        };
        assert_eq!(plan.total_files(), 66);
        assert_eq!(plan_captures(&plan).unwrap().len(), 66);
    }

    #[test]
    fn full_scale_plan_matches_published_composition() {
        let plan = DatasetPlan::full_scale();
        let caps = plan_captures(&plan).unwrap();
        assert_eq!(caps.len(), 300 + 30 + 100 + 100 + 200);
        let count = |kind| caps.iter().filter(|c| c.kind == kind).count();
        assert_eq!(count(WaveformKind::UniformNoise), 300);
        assert_eq!(count(WaveformKind::BandNoise), 30);
        assert_eq!(count(WaveformKind::DualTone), 100);
        assert_eq!(count(WaveformKind::Sine), 300); // 100 sweep + 2x100 amplitude
        // Uniform noise at 1.2 Vpp -> 0.6 V amplitude.
        assert_eq!(caps[0].amplitude_v, 0.6);
        // Band slices are contiguous 100 MHz pieces of 0-3 GHz.
        if let Descriptor::Band { f_start_hz, f_end_hz } = caps[300].descriptor {
            assert_eq!(f_start_hz, 0.0);
            assert!((f_end_hz - 1e8).abs() < 1.0);
        } else {
            panic!("expected band descriptor");
        }
    }

    #[test]
    fn dual_tone_pairs_are_coherent_and_two_bins_apart() {
        for plan in [DatasetPlan::desk_scale(), DatasetPlan::full_scale()] {
            let df = plan.sample_rate_hz / plan.eval_n_fft as f64;
            for (f1, f2) in dual_tone_pairs(&plan).unwrap() {
                let k1 = f1 / df;
                let k2 = f2 / df;
                assert!((k1 - k1.round()).abs() < 1e-9);
                assert!((k2 - k2.round()).abs() < 1e-9);
                assert!(k2 - k1 >= 2.0 - 1e-9, "spacing {} bins", k2 - k1);
                // Lower IM3 product stays above DC.
                assert!(2.0 * f1 - f2 > 0.0);
            }
        }
    }

    #[test]
    fn full_scale_dual_tones_mirror_published_spacing() {
        // 1 MHz resolution at 25 GHz / 25000 points; first pair lands on
        // 29 + 31 MHz, i.e. 2 MHz apart.
        let plan = DatasetPlan::full_scale();
        let pairs = dual_tone_pairs(&plan).unwrap();
        let (f1, f2) = pairs[0];
        assert_eq!(f2 - f1, 2e6);
        let last = pairs[pairs.len() - 1];
        assert!((last.0 - 1.999e9).abs() < 1e6);
        assert!((last.1 - 2.001e9).abs() < 1e6);
    }

    #[test]
    fn suite_build_is_deterministic_and_reloadable() {
        let plan = DatasetPlan {
            samples_per_file: 2048,
            eval_n_fft: 1024,
            training: NoiseGroupSpec { amplitude_vpp: 1.2, count: 2 },
            time_test: BandGroupSpec {
                amplitude_vpp: 1.0,
                f_start_hz: 0.0,
                f_end_hz: 0.12,
                count: 2,
            },
            sine_sweep: SineSweepSpec { amplitude_vpp: 0.2, f_max_hz: 0.12, count: 2 },
            dual_tone: DualToneSweepSpec {
                amplitude_vpp: 0.2,
                f_center_max_hz: 0.08,
                count: 2,
                spacing_bins: 2,
            },
            amp_sweeps: vec![AmpSweepSpec {
                f_hz: 0.036,
                start_dbm: -20.0,
                stop_dbm: -5.0,
                count: 2,
            }],
            ..DatasetPlan::desk_scale()
        };
        let dut = DutSpec::reference_amplifier();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let e1 = build_dataset_suite(&plan, &dut, d1.path(), 99).unwrap();
        let e2 = build_dataset_suite(&plan, &dut, d2.path(), 99).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.len(), plan.total_files());

        // Every manifest row points at a parseable capture whose metadata
        // matches the row.
        let manifest = read_manifest(&d1.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest, e1);
        for e in &manifest {
            let pair = read_capture_csv(&d1.path().join(&e.path)).unwrap();
            assert_eq!(pair.meta.capture_index, e.capture_index);
            assert_eq!(pair.meta.waveform_kind, e.kind);
            assert_eq!(pair.meta.amplitude_v, e.amplitude_v);
            assert_eq!(pair.meta.seed, e.seed);
            assert_eq!(pair.len(), plan.samples_per_file);
        }

        // Byte-identical across the two builds.
        for e in &e1 {
            let b1 = fs::read(d1.path().join(&e.path)).unwrap();
            let b2 = fs::read(d2.path().join(&e.path)).unwrap();
            assert_eq!(b1, b2, "capture {} differs between builds", e.capture_index);
        }
    }

    #[test]
    fn time_column_is_exact_progression() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let pair = small_pair(5);
        write_capture_csv(&pair, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let dt = 1.0 / pair.stimulus.sample_rate_hz;
        for (k, line) in text.lines().skip(8).enumerate() {
            let t: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert_eq!(t, k as f64 * dt, "row {k}");
        }
    }
}
