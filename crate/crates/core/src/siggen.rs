//! Stimulus waveform generation and amplitude/dBm conversion.
//!
//! Four waveform classes cover the whole dataset vocabulary: full-band
//! uniform noise (the training class), band-limited noise synthesized by
//! spectral masking, single sine tones, and equal-amplitude dual tones.
//!
//! All generators are pure functions of their arguments. Randomness comes
//! from a ChaCha8 stream seeded with the caller's `u64` seed, so a fixed
//! `(args, seed)` pair produces bit-identical output on every platform.
//!
//! # Example
//!
//! ```
//! use rfnoise_core::siggen;
//!
//! let w = siggen::gen_uniform_noise(1000, 0.6, 1.0, 42).unwrap();
//! assert!(w.samples.iter().all(|&x| x.abs() <= 0.6));
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A uniformly sampled real-valued signal. The universal currency between
/// generators, the device simulator, the pipeline, and the metrology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    /// Sample values in volts.
    pub samples: Vec<f64>,
    /// Sampling rate in samples/second; always > 0.
    pub sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        debug_assert!(sample_rate_hz > 0.0);
        Waveform { samples, sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nyquist frequency, fs/2.
    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }
}

/// Frequency band for band-limited noise, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
}

impl BandSpec {
    pub fn new(f_start_hz: f64, f_end_hz: f64) -> Result<Self> {
        if !(f_start_hz >= 0.0 && f_end_hz > f_start_hz) {
            return Err(Error::Domain(format!(
                "band [{f_start_hz}, {f_end_hz}] Hz is not a valid ascending range"
            )));
        }
        Ok(BandSpec { f_start_hz, f_end_hz })
    }
}

/// Single-tone descriptor: reference frequency, amplitude, optional offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub f_hz: f64,
    pub amplitude_v: f64,
    /// Frequency offset added to `f_hz`; zero for a plain tone.
    pub delta_f_hz: f64,
}

impl ToneSpec {
    pub fn new(f_hz: f64, amplitude_v: f64) -> Self {
        ToneSpec { f_hz, amplitude_v, delta_f_hz: 0.0 }
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// i.i.d. samples uniform on [-A, A].
///
/// Flat amplitude histogram and flat expected spectrum out to Nyquist; this
/// is the training-set class.
pub fn gen_uniform_noise(
    n: usize,
    amplitude_v: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Waveform> {
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    if amplitude_v < 0.0 {
        return Err(Error::Domain(format!("negative amplitude {amplitude_v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| amplitude_v * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();
    Ok(Waveform::new(samples, sample_rate_hz))
}

/// Band-limited noise via spectral masking.
///
/// Bins whose frequency falls inside `band` (grid `k = round(f*n/fs)`, both
/// edges inclusive) are filled with independent Uniform(-1, 1) real and
/// imaginary parts; their negative-frequency mirrors get the conjugate; all
/// other bins are exactly zero. The inverse transform is then mapped
/// affinely onto [-A, +A] so that `min == -A` and `max == +A`.
///
/// The affine rescale necessarily leaves a small offset in the DC bin;
/// "out-of-band energy is zero" therefore holds for every nonzero-frequency
/// bin outside the band.
pub fn gen_narrowband_noise(
    n: usize,
    band: BandSpec,
    amplitude_v: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Waveform> {
    if n < 2 {
        return Err(Error::EmptyRequest);
    }
    if amplitude_v < 0.0 {
        return Err(Error::Domain(format!("negative amplitude {amplitude_v}")));
    }
    let nyquist = sample_rate_hz / 2.0;
    if band.f_end_hz > nyquist {
        return Err(Error::SpectralBounds { f_hz: band.f_end_hz, nyquist_hz: nyquist });
    }

    let bin = |f: f64| (f * n as f64 / sample_rate_hz).round() as usize;
    let k_start = bin(band.f_start_hz);
    let k_end = bin(band.f_end_hz).min(n / 2);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in k_start..=k_end {
        let u = 2.0 * rng.gen::<f64>() - 1.0;
        let v = 2.0 * rng.gen::<f64>() - 1.0;
        if k == 0 || 2 * k == n {
            // Self-conjugate bins must be real for a real time signal.
            spectrum[k] = Complex::new(u, 0.0);
        } else {
            spectrum[k] = Complex::new(u, v);
            spectrum[n - k] = Complex::new(u, -v);
        }
    }

    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);

    let raw: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let samples = if span == 0.0 {
        vec![0.0; n]
    } else {
        raw.iter()
            .map(|&x| 2.0 * amplitude_v * (x - min) / span - amplitude_v)
            .collect()
    };
    Ok(Waveform::new(samples, sample_rate_hz))
}

/// Sine wave `A*sin(2*pi*(f + df)*k/fs)`.
pub fn gen_sine(n: usize, tone: ToneSpec, sample_rate_hz: f64) -> Result<Waveform> {
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    let f = tone.f_hz + tone.delta_f_hz;
    let nyquist = sample_rate_hz / 2.0;
    if f >= nyquist {
        return Err(Error::Aliasing { f_hz: f, nyquist_hz: nyquist });
    }
    let w = 2.0 * std::f64::consts::PI * f / sample_rate_hz;
    let samples = (0..n)
        .map(|k| tone.amplitude_v * (w * k as f64).sin())
        .collect();
    Ok(Waveform::new(samples, sample_rate_hz))
}

/// Sum of two equal-amplitude sines at `f1` and `f2`.
pub fn gen_dual_tone(
    n: usize,
    f1_hz: f64,
    f2_hz: f64,
    amplitude_v: f64,
    sample_rate_hz: f64,
) -> Result<Waveform> {
    if f1_hz == f2_hz {
        return Err(Error::DegenerateTone { f_hz: f1_hz });
    }
    let a = gen_sine(n, ToneSpec::new(f1_hz, amplitude_v), sample_rate_hz)?;
    let b = gen_sine(n, ToneSpec::new(f2_hz, amplitude_v), sample_rate_hz)?;
    let samples = a
        .samples
        .iter()
        .zip(b.samples.iter())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Waveform::new(samples, sample_rate_hz))
}

// ---------------------------------------------------------------------------
// Amplitude <-> dBm
// ---------------------------------------------------------------------------

/// Power in dBm of a sine with amplitude `a_v` volts into `z_ohm`.
///
/// Convention: `P = A^2 / (2Z)` (average power of a sine into Z), then
/// `dBm = 10*log10(P / 1 mW)`. This reproduces the reference
/// correspondences 2 Vpp <-> 10 dBm and 1.12 Vpp <-> 5 dBm into 50 ohms.
pub fn amplitude_to_dbm(a_v: f64, z_ohm: f64) -> Result<f64> {
    if z_ohm <= 0.0 {
        return Err(Error::Domain(format!("non-positive impedance {z_ohm}")));
    }
    if a_v <= 0.0 {
        return Err(Error::Domain(format!("non-positive amplitude {a_v}")));
    }
    Ok(10.0 * (a_v * a_v / (2.0 * z_ohm * 1e-3)).log10())
}

/// Inverse of [`amplitude_to_dbm`]: sine amplitude in volts for a power.
pub fn dbm_to_amplitude(p_dbm: f64, z_ohm: f64) -> Result<f64> {
    if z_ohm <= 0.0 {
        return Err(Error::Domain(format!("non-positive impedance {z_ohm}")));
    }
    Ok((2.0 * z_ohm * 1e-3 * 10f64.powf(p_dbm / 10.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    #[test]
    fn uniform_noise_bounds_and_mean() {
        let n = 100_000;
        let a = 0.6;
        let w = gen_uniform_noise(n, a, 1.0, 7).unwrap();
        assert_eq!(w.len(), n);
        assert!(w.samples.iter().all(|&x| x.abs() <= a));
        let mean = w.samples.iter().sum::<f64>() / n as f64;
        let bound = 3.0 * (a / 3f64.sqrt()) / (n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} exceeds {bound}");
    }

    #[test]
    fn uniform_noise_zero_amplitude() {
        let w = gen_uniform_noise(100, 0.0, 1.0, 1).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_noise_ks_statistic() {
        // Empirical CDF against the closed-form Uniform(-1,1) CDF.
        let n = 1_000_000;
        let w = gen_uniform_noise(n, 1.0, 1.0, 3).unwrap();
        let mut sorted = w.samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |x: f64| ((x + 1.0) / 2.0).clamp(0.0, 1.0);
        let mut d = 0.0f64;
        for (i, &x) in sorted.iter().enumerate() {
            let f = cdf(x);
            d = d.max(f - i as f64 / n as f64);
            d = d.max((i + 1) as f64 / n as f64 - f);
        }
        // 1% two-sided critical value: 1.6276 / sqrt(n).
        let crit = 1.6276 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= critical {crit}");
    }

    #[test]
    fn uniform_noise_variance_converges() {
        let n = 1_000_000;
        let a = 0.7;
        let w = gen_uniform_noise(n, a, 1.0, 11).unwrap();
        let var = w.samples.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let expect = a * a / 3.0;
        assert!((var - expect).abs() / expect < 0.01);
    }

    #[test]
    fn uniform_noise_deterministic() {
        let a = gen_uniform_noise(4096, 0.5, 1.0, 99).unwrap();
        let b = gen_uniform_noise(4096, 0.5, 1.0, 99).unwrap();
        assert_eq!(a, b);
        let c = gen_uniform_noise(4096, 0.5, 1.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_noise_rejects_zero_count() {
        assert!(matches!(gen_uniform_noise(0, 1.0, 1.0, 0), Err(Error::EmptyRequest)));
    }

    #[test]
    fn narrowband_out_of_band_bins_are_empty() {
        let n = 4096;
        let fs = 1.0;
        let band = BandSpec::new(0.1 * fs / 2.0, 0.2 * fs / 2.0).unwrap();
        let w = gen_narrowband_noise(n, band, 0.5, fs, 5).unwrap();
        let spec = metrics::spectrum(&w, n).unwrap();
        let k_start = (band.f_start_hz * n as f64 / fs).round() as usize;
        let k_end = (band.f_end_hz * n as f64 / fs).round() as usize;
        let in_band_peak = (k_start..=k_end)
            .map(|k| spec.complex_bins[k].norm())
            .fold(0.0f64, f64::max);
        // The affine rescale puts the residual offset in bin 0; every other
        // out-of-band bin is zero up to transform roundoff.
        for k in 1..=n / 2 {
            if (k_start..=k_end).contains(&k) {
                continue;
            }
            let mag = spec.complex_bins[k].norm();
            assert!(
                mag <= 1e-10 * in_band_peak,
                "bin {k} leaked: {mag} vs peak {in_band_peak}"
            );
        }
    }

    #[test]
    fn narrowband_rescaled_onto_target_amplitude() {
        let band = BandSpec::new(0.05, 0.1).unwrap();
        let w = gen_narrowband_noise(4096, band, 0.5, 1.0, 17).unwrap();
        let min = w.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = w.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((min + 0.5).abs() < 1e-12, "min {min}");
        assert!((max - 0.5).abs() < 1e-12, "max {max}");
    }

    #[test]
    fn narrowband_deterministic() {
        let band = BandSpec::new(0.02, 0.04).unwrap();
        let a = gen_narrowband_noise(4096, band, 0.5, 1.0, 23).unwrap();
        let b = gen_narrowband_noise(4096, band, 0.5, 1.0, 23).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn narrowband_rejects_band_past_nyquist() {
        let band = BandSpec::new(0.4, 0.6).unwrap();
        let r = gen_narrowband_noise(1024, band, 1.0, 1.0, 0);
        assert!(matches!(r, Err(Error::SpectralBounds { .. })));
    }

    #[test]
    fn sine_exact_eighth_rate_values() {
        let w = gen_sine(8, ToneSpec::new(0.125, 1.0), 1.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [0.0, s, 1.0, s, 0.0, -s, -1.0, -s];
        for (got, want) in w.samples.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn sine_zero_amplitude_is_silent() {
        let w = gen_sine(64, ToneSpec::new(0.1, 0.0), 1.0).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sine_rejects_aliasing() {
        let tone = ToneSpec { f_hz: 0.4, amplitude_v: 1.0, delta_f_hz: 0.2 };
        assert!(matches!(gen_sine(64, tone, 1.0), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn dual_tone_rejects_equal_frequencies() {
        let r = gen_dual_tone(64, 0.1, 0.1, 1.0, 1.0);
        assert!(matches!(r, Err(Error::DegenerateTone { .. })));
    }

    #[test]
    fn dual_tone_peak_bounded_by_twice_amplitude() {
        let w = gen_dual_tone(4096, 0.01, 0.013, 0.3, 1.0).unwrap();
        assert!(w.samples.iter().all(|&x| x.abs() <= 2.0 * 0.3 + 1e-12));
    }

    #[test]
    fn dual_tone_zero_amplitude_is_silent() {
        let w = gen_dual_tone(64, 0.01, 0.02, 0.0, 1.0).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dbm_reference_correspondences() {
        // 2 Vpp sine (A = 1 V) into 50 ohms is 10 dBm.
        let p = amplitude_to_dbm(1.0, 50.0).unwrap();
        assert!((p - 10.0).abs() < 1e-12, "{p}");
        // 1.12 Vpp (A = 0.5623 V) is 5 dBm.
        let p = amplitude_to_dbm(0.5623, 50.0).unwrap();
        assert!((p - 5.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn dbm_round_trip() {
        for &a in &[1e-6, 0.01, 0.5623, 1.0, 3.7, 250.0] {
            let p = amplitude_to_dbm(a, 50.0).unwrap();
            let back = dbm_to_amplitude(p, 50.0).unwrap();
            assert!((back - a).abs() / a < 1e-12, "{a} -> {p} -> {back}");
        }
    }

    #[test]
    fn dbm_twenty_db_per_decade() {
        let p1 = amplitude_to_dbm(0.1, 50.0).unwrap();
        let p2 = amplitude_to_dbm(1.0, 50.0).unwrap();
        assert!((p2 - p1 - 20.0).abs() < 1e-12);
        assert!(amplitude_to_dbm(0.2, 50.0).unwrap() > amplitude_to_dbm(0.1, 50.0).unwrap());
    }

    #[test]
    fn dbm_rejects_non_positive_amplitude() {
        assert!(matches!(amplitude_to_dbm(0.0, 50.0), Err(Error::Domain(_))));
        assert!(matches!(amplitude_to_dbm(-1.0, 50.0), Err(Error::Domain(_))));
    }
}
