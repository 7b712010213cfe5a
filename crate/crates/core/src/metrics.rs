//! Frequency-domain metrology: spectra, tone power, gain curves, two-tone
//! OIP3.
//!
//! No window function is applied anywhere; instead every tone is required
//! to sit exactly on an FFT bin (coherent sampling), which makes amplitude
//! and dBm readings exact. The sweep planner in [`crate::testbench`] snaps
//! requested frequencies onto the bin grid before they reach this module.
//!
//! Measured and model-predicted responses flow through byte-identical code
//! paths: every curve operation takes a [`Predictor`] for the "predicted"
//! series and runs the same spectral measurement on both.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dutsim::{simulate, DutSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::siggen::{self, amplitude_to_dbm, dbm_to_amplitude, ToneSpec, Waveform};

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

/// Discrete Fourier transform of a waveform prefix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Frequency of each bin, `k * fs / n_fft`, for k = 0..n_fft.
    pub bin_freqs_hz: Vec<f64>,
    /// Unnormalized complex DFT bins.
    pub complex_bins: Vec<Complex<f64>>,
    pub n_fft: usize,
    pub sample_rate_hz: f64,
}

impl Spectrum {
    /// Single-sided amplitude convention: `2|X[k]|/N` for 0 < k < N/2.
    pub fn amplitude_at_bin(&self, k: usize) -> f64 {
        2.0 * self.complex_bins[k].norm() / self.n_fft as f64
    }

    /// Bin index for a coherent frequency; off-grid by more than 1e-6 bin
    /// is rejected because leakage would corrupt any dBm reading.
    pub fn coherent_bin(&self, f_hz: f64) -> Result<usize> {
        let exact = f_hz * self.n_fft as f64 / self.sample_rate_hz;
        let k = exact.round();
        if (exact - k).abs() > 1e-6 {
            return Err(Error::IncoherentTone {
                f_hz,
                nearest_bin_hz: k * self.sample_rate_hz / self.n_fft as f64,
            });
        }
        let k = k as usize;
        if k == 0 || k >= (self.n_fft + 1) / 2 {
            return Err(Error::Domain(format!(
                "frequency {f_hz} Hz is not a strictly positive sub-Nyquist bin"
            )));
        }
        Ok(k)
    }
}

/// DFT of the first `n_fft` samples of `w`, no window function.
pub fn spectrum(w: &Waveform, n_fft: usize) -> Result<Spectrum> {
    if n_fft == 0 || n_fft > w.len() {
        return Err(Error::FftLength { n_fft, len: w.len() });
    }
    let mut bins: Vec<Complex<f64>> = w.samples[..n_fft]
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut bins);
    let df = w.sample_rate_hz / n_fft as f64;
    Ok(Spectrum {
        bin_freqs_hz: (0..n_fft).map(|k| k as f64 * df).collect(),
        complex_bins: bins,
        n_fft,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// FFT bin spacing `fs / n`.
pub fn freq_resolution(sample_rate_hz: f64, n: usize) -> f64 {
    sample_rate_hz / n as f64
}

/// Dominant positive-frequency tone (DC and Nyquist bins excluded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakTone {
    pub f_max_hz: f64,
    pub amplitude_v: f64,
    pub bin: usize,
}

/// Bin with the largest magnitude; exact ties go to the lower frequency.
pub fn peak_tone(s: &Spectrum) -> Result<PeakTone> {
    let mut best: Option<(usize, f64)> = None;
    for k in 1..(s.n_fft + 1) / 2 {
        let mag = s.complex_bins[k].norm();
        if best.map_or(true, |(_, b)| mag > b) {
            best = Some((k, mag));
        }
    }
    match best {
        Some((k, mag)) if mag > 0.0 => Ok(PeakTone {
            f_max_hz: s.bin_freqs_hz[k],
            amplitude_v: s.amplitude_at_bin(k),
            bin: k,
        }),
        _ => Err(Error::AllZeroSpectrum),
    }
}

/// Power of the coherent tone at `f_hz`, in dBm into `z_ohm`.
pub fn tone_power_dbm(s: &Spectrum, f_hz: f64, z_ohm: f64) -> Result<f64> {
    let k = s.coherent_bin(f_hz)?;
    amplitude_to_dbm(s.amplitude_at_bin(k), z_ohm)
}

// ---------------------------------------------------------------------------
// Gain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMeasurement {
    /// Frequency of the dominant input tone.
    pub f_hz: f64,
    /// `P_out(f_max) - P_in(f_max)` in dB.
    pub gain_db: f64,
}

/// Gain at the dominant input tone: output power minus input power at the
/// frequency where the input spectrum peaks.
pub fn gain_db(
    input_wf: &Waveform,
    output_wf: &Waveform,
    n_fft: usize,
    z_ohm: f64,
) -> Result<GainMeasurement> {
    if input_wf.sample_rate_hz != output_wf.sample_rate_hz {
        return Err(Error::Domain("input and output sample rates differ".into()));
    }
    let in_spec = spectrum(input_wf, n_fft)?;
    let out_spec = spectrum(output_wf, n_fft)?;
    let peak = peak_tone(&in_spec)?;
    let p_in = amplitude_to_dbm(in_spec.amplitude_at_bin(peak.bin), z_ohm)?;
    let p_out = amplitude_to_dbm(out_spec.amplitude_at_bin(peak.bin), z_ohm)?;
    Ok(GainMeasurement { f_hz: peak.f_max_hz, gain_db: p_out - p_in })
}

// ---------------------------------------------------------------------------
// OIP3
// ---------------------------------------------------------------------------

/// Intercept from measured fundamental and IM3 powers:
/// `OIP3 = (3*P1 - P3) / 2`.
pub fn oip3_from_powers(p_fund_dbm: f64, p_im3_dbm: f64) -> f64 {
    (3.0 * p_fund_dbm - p_im3_dbm) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oip3Measurement {
    pub oip3_dbm: f64,
    /// Fundamental power at the lower tone f1.
    pub p_fund_dbm: f64,
    /// IM3 power at the lower product 2*f1 - f2.
    pub p_im3_dbm: f64,
    /// Upper product 2*f2 - f1, reported informationally.
    pub p_im3_upper_dbm: Option<f64>,
    pub f_fund_hz: f64,
    pub f_im3_hz: f64,
}

/// Two-tone OIP3 from an input/output waveform pair.
///
/// `f1 < f2` and all of f1, f2, 2f1-f2, 2f2-f1 must be coherent bins of
/// the `n_fft`-point grid. The fundamental is read at f1, the IM3 at the
/// lower product. An IM3 bin that does not clear the surrounding spectral
/// floor is reported as [`Error::UnreliableIm3`] rather than as a number.
pub fn oip3_dbm(
    input_wf: &Waveform,
    output_wf: &Waveform,
    f1_hz: f64,
    f2_hz: f64,
    n_fft: usize,
    z_ohm: f64,
) -> Result<Oip3Measurement> {
    if !(f1_hz < f2_hz) {
        return Err(Error::Domain(format!(
            "two-tone order violated: f1 {f1_hz} must be below f2 {f2_hz}"
        )));
    }
    let f_lo = 2.0 * f1_hz - f2_hz;
    let f_hi = 2.0 * f2_hz - f1_hz;
    let out_spec = spectrum(output_wf, n_fft)?;
    let k1 = out_spec.coherent_bin(f1_hz)?;
    let k2 = out_spec.coherent_bin(f2_hz)?;
    let k_lo = out_spec.coherent_bin(f_lo)?;
    let k_hi = out_spec.coherent_bin(f_hi)?;

    // The stimulus must actually carry the stated tone pair.
    let in_spec = spectrum(input_wf, n_fft)?;
    let in_peak = peak_tone(&in_spec)?;
    if in_peak.bin != k1 && in_peak.bin != k2 {
        return Err(Error::Domain(format!(
            "input spectrum peaks at {} Hz, not at either stated tone",
            in_peak.f_max_hz
        )));
    }

    let im3_amp = out_spec.amplitude_at_bin(k_lo);
    let fund_amp = out_spec.amplitude_at_bin(k1);
    let floor = spectral_floor(&out_spec, k_lo, &[k1, k2, k_lo, k_hi]);
    if im3_amp < floor || im3_amp < 1e-12 * fund_amp {
        return Err(Error::UnreliableIm3 { im3_v: im3_amp, floor_v: floor });
    }

    let p_fund = amplitude_to_dbm(fund_amp, z_ohm)?;
    let p_im3 = amplitude_to_dbm(im3_amp, z_ohm)?;
    let upper = out_spec.amplitude_at_bin(k_hi);
    Ok(Oip3Measurement {
        oip3_dbm: oip3_from_powers(p_fund, p_im3),
        p_fund_dbm: p_fund,
        p_im3_dbm: p_im3,
        p_im3_upper_dbm: if upper > 0.0 {
            Some(amplitude_to_dbm(upper, z_ohm)?)
        } else {
            None
        },
        f_fund_hz: f1_hz,
        f_im3_hz: f_lo,
    })
}

/// Local spectral floor around `center`: the largest amplitude within
/// eight bins on either side, excluding the signal bins themselves. An IM3
/// reading that does not clear this by a healthy margin is roundoff or
/// noise, not a tone.
fn spectral_floor(s: &Spectrum, center: usize, signal_bins: &[usize]) -> f64 {
    let half = (s.n_fft + 1) / 2;
    let lo = center.saturating_sub(8).max(1);
    let hi = (center + 8).min(half.saturating_sub(1));
    (lo..=hi)
        .filter(|k| !signal_bins.contains(k))
        .map(|k| s.amplitude_at_bin(k))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// What a metric curve plots against its x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    GainVsFreq,
    GainVsPower,
    Oip3VsFreq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Hz for frequency sweeps, dBm for power sweeps.
    pub x: f64,
    pub measured: f64,
    pub predicted: f64,
}

/// Measured-vs-predicted series over a sweep; x strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl MetricCurve {
    pub fn new(kind: CurveKind, points: Vec<CurvePoint>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].x >= w[1].x) {
            return Err(Error::Domain("curve x values must be strictly increasing".into()));
        }
        Ok(MetricCurve { kind, points })
    }

    /// `x,measured,predicted` rows; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,measured,predicted\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.x, p.measured, p.predicted));
        }
        out
    }

    /// Largest |measured - predicted| over the curve.
    pub fn max_abs_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.measured - p.predicted).abs())
            .fold(0.0, f64::max)
    }
}

/// Anything that can stand in for the device on the "predicted" side of a
/// curve: the trained network, or the device itself as a perfect model.
pub trait Predictor {
    /// Predictions exist only for stimulus indices >= warmup().
    fn warmup(&self) -> usize;
    /// Predicted delay-free response at stimulus indices [start, start+n).
    fn predict(&self, stimulus: &Waveform, n: usize, start: usize) -> Result<Waveform>;
}

/// The device itself as its own perfect model: noiseless simulation with
/// the delay stripped.
impl Predictor for DutSpec {
    fn warmup(&self) -> usize {
        self.pre_filter.len()
    }

    fn predict(&self, stimulus: &Waveform, n: usize, start: usize) -> Result<Waveform> {
        let needed = start + n + self.delay_samples;
        if stimulus.len() < needed {
            return Err(Error::InsufficientLength { needed, got: stimulus.len() });
        }
        let noiseless = DutSpec { noise_sigma_v: 0.0, ..self.clone() };
        let resp = simulate(&noiseless, stimulus, 0)?;
        let lo = start + self.delay_samples;
        Ok(Waveform::new(resp.samples[lo..lo + n].to_vec(), stimulus.sample_rate_hz))
    }
}

/// Shared knobs for all sweep measurements.
#[derive(Debug, Clone, Copy)]
pub struct CurveConfig {
    pub n_fft: usize,
    pub z_ohm: f64,
    /// Samples discarded before the analysis segment. Must cover device
    /// delay plus filter transient; raised to the predictor's warmup if
    /// that is larger.
    pub skip: usize,
    /// Extra stimulus beyond `skip + n_fft` so delayed responses still
    /// cover the whole segment.
    pub margin: usize,
    pub seed: u64,
}

impl CurveConfig {
    pub fn new(n_fft: usize, z_ohm: f64, seed: u64) -> Self {
        CurveConfig { n_fft, z_ohm, skip: 1024, margin: 512, seed }
    }
}

/// One sweep point: simulate the device on `stim`, take the post-transient
/// segments, and measure both sides identically.
fn measured_and_predicted_segments(
    predictor: &dyn Predictor,
    dut: &DutSpec,
    stim: &Waveform,
    cfg: &CurveConfig,
    point_seed: u64,
) -> Result<(Waveform, Waveform, Waveform)> {
    let skip = cfg.skip.max(predictor.warmup());
    let resp = simulate(dut, stim, point_seed)?;
    let seg = |w: &Waveform| {
        Waveform::new(w.samples[skip..skip + cfg.n_fft].to_vec(), w.sample_rate_hz)
    };
    let predicted = predictor.predict(stim, cfg.n_fft, skip)?;
    Ok((seg(stim), seg(&resp), predicted))
}

fn stimulus_len(cfg: &CurveConfig, predictor: &dyn Predictor) -> usize {
    cfg.skip.max(predictor.warmup()) + cfg.n_fft + cfg.margin
}

/// Gain vs frequency: one coherent sine per sweep point.
pub fn gain_frequency_curve(
    predictor: &dyn Predictor,
    dut: &DutSpec,
    freqs_hz: &[f64],
    amplitude_v: f64,
    sample_rate_hz: f64,
    cfg: &CurveConfig,
) -> Result<MetricCurve> {
    let len = stimulus_len(cfg, predictor);
    let mut points = Vec::with_capacity(freqs_hz.len());
    for (i, &f) in freqs_hz.iter().enumerate() {
        let stim = siggen::gen_sine(len, ToneSpec::new(f, amplitude_v), sample_rate_hz)?;
        let (stim_seg, meas_seg, pred_seg) = measured_and_predicted_segments(
            predictor,
            dut,
            &stim,
            cfg,
            seed::split(cfg.seed, i as u64),
        )?;
        // Coherence gate: the segment spectrum must put the tone on-grid.
        spectrum(&stim_seg, cfg.n_fft)?.coherent_bin(f)?;
        let measured = gain_db(&stim_seg, &meas_seg, cfg.n_fft, cfg.z_ohm)?;
        let predicted = gain_db(&stim_seg, &pred_seg, cfg.n_fft, cfg.z_ohm)?;
        points.push(CurvePoint { x: f, measured: measured.gain_db, predicted: predicted.gain_db });
    }
    MetricCurve::new(CurveKind::GainVsFreq, points)
}

/// Gain vs input power at a fixed frequency; powers in dBm, ascending.
pub fn gain_power_curve(
    predictor: &dyn Predictor,
    dut: &DutSpec,
    f_hz: f64,
    powers_dbm: &[f64],
    sample_rate_hz: f64,
    cfg: &CurveConfig,
) -> Result<MetricCurve> {
    let len = stimulus_len(cfg, predictor);
    let mut points = Vec::with_capacity(powers_dbm.len());
    for (i, &p) in powers_dbm.iter().enumerate() {
        let amp = dbm_to_amplitude(p, cfg.z_ohm)?;
        let stim = siggen::gen_sine(len, ToneSpec::new(f_hz, amp), sample_rate_hz)?;
        let (stim_seg, meas_seg, pred_seg) = measured_and_predicted_segments(
            predictor,
            dut,
            &stim,
            cfg,
            seed::split(cfg.seed, i as u64),
        )?;
        let measured = gain_db(&stim_seg, &meas_seg, cfg.n_fft, cfg.z_ohm)?;
        let predicted = gain_db(&stim_seg, &pred_seg, cfg.n_fft, cfg.z_ohm)?;
        points.push(CurvePoint { x: p, measured: measured.gain_db, predicted: predicted.gain_db });
    }
    MetricCurve::new(CurveKind::GainVsPower, points)
}

/// A sweep point whose IM3 could not be measured reliably.
#[derive(Debug, Clone)]
pub struct Oip3Flag {
    pub f_center_hz: f64,
    pub detail: String,
}

/// OIP3-vs-frequency sweep result; flagged points are omitted from the
/// curve and listed separately.
#[derive(Debug, Clone)]
pub struct Oip3Sweep {
    pub curve: MetricCurve,
    pub flagged: Vec<Oip3Flag>,
}

/// OIP3 vs frequency over the supplied (f1, f2) tone pairs.
///
/// `amplitude_v` is the per-tone amplitude. The x coordinate of each point
/// is the pair center (f1+f2)/2.
pub fn oip3_frequency_curve(
    predictor: &dyn Predictor,
    dut: &DutSpec,
    tone_pairs: &[(f64, f64)],
    amplitude_v: f64,
    sample_rate_hz: f64,
    cfg: &CurveConfig,
) -> Result<Oip3Sweep> {
    let len = stimulus_len(cfg, predictor);
    let mut points = Vec::with_capacity(tone_pairs.len());
    let mut flagged = Vec::new();
    for (i, &(f1, f2)) in tone_pairs.iter().enumerate() {
        let center = 0.5 * (f1 + f2);
        let stim = siggen::gen_dual_tone(len, f1, f2, amplitude_v, sample_rate_hz)?;
        let (stim_seg, meas_seg, pred_seg) = measured_and_predicted_segments(
            predictor,
            dut,
            &stim,
            cfg,
            seed::split(cfg.seed, i as u64),
        )?;
        let measured = oip3_dbm(&stim_seg, &meas_seg, f1, f2, cfg.n_fft, cfg.z_ohm);
        let predicted = oip3_dbm(&stim_seg, &pred_seg, f1, f2, cfg.n_fft, cfg.z_ohm);
        match (measured, predicted) {
            (Ok(m), Ok(p)) => {
                points.push(CurvePoint { x: center, measured: m.oip3_dbm, predicted: p.oip3_dbm });
            }
            (m, p) => {
                let detail = [("measured", m.err()), ("predicted", p.err())]
                    .into_iter()
                    .filter_map(|(side, e)| e.map(|e| format!("{side}: {e}")))
                    .collect::<Vec<_>>()
                    .join("; ");
                flagged.push(Oip3Flag { f_center_hz: center, detail });
            }
        }
    }
    Ok(Oip3Sweep { curve: MetricCurve::new(CurveKind::Oip3VsFreq, points)?, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dutsim;

    fn coherent_sine(n: usize, bin: usize, amp: f64) -> Waveform {
        siggen::gen_sine(n, ToneSpec::new(bin as f64 / n as f64, amp), 1.0).unwrap()
    }

    #[test]
    fn dc_signal_concentrates_in_bin_zero() {
        let w = Waveform::new(vec![0.75; 256], 1.0);
        let s = spectrum(&w, 256).unwrap();
        assert!((s.complex_bins[0].norm() - 0.75 * 256.0).abs() < 1e-9);
        for k in 1..256 {
            assert!(s.complex_bins[k].norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn coherent_unit_sine_has_half_n_magnitude() {
        let n = 1024;
        let s = spectrum(&coherent_sine(n, 37, 1.0), n).unwrap();
        assert!((s.complex_bins[37].norm() - n as f64 / 2.0).abs() < 1e-8);
    }

    #[test]
    fn parseval_on_random_input() {
        let w = siggen::gen_uniform_noise(2048, 1.0, 1.0, 21).unwrap();
        let s = spectrum(&w, 2048).unwrap();
        let time: f64 = w.samples.iter().map(|x| x * x).sum();
        let freq: f64 = s.complex_bins.iter().map(|c| c.norm_sqr()).sum::<f64>() / 2048.0;
        assert!((time - freq).abs() / time < 1e-9, "{time} vs {freq}");
    }

    #[test]
    fn spectrum_rejects_oversized_nfft() {
        let w = Waveform::new(vec![0.0; 16], 1.0);
        assert!(matches!(spectrum(&w, 32), Err(Error::FftLength { .. })));
    }

    #[test]
    fn peak_tone_recovers_generator_amplitude() {
        let n = 4096;
        let s = spectrum(&coherent_sine(n, 37, 0.1), n).unwrap();
        let p = peak_tone(&s).unwrap();
        assert_eq!(p.bin, 37);
        assert!((p.f_max_hz - 37.0 / n as f64).abs() < 1e-15);
        assert!((p.amplitude_v - 0.1).abs() < 1e-9);
    }

    #[test]
    fn peak_tone_picks_larger_of_two_tones() {
        let n = 4096;
        let a = coherent_sine(n, 40, 0.1);
        let b = coherent_sine(n, 80, 0.05);
        let sum = Waveform::new(
            a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(),
            1.0,
        );
        let p = peak_tone(&spectrum(&sum, n).unwrap()).unwrap();
        assert_eq!(p.bin, 40);
    }

    #[test]
    fn peak_tone_breaks_ties_toward_lower_frequency() {
        let n = 64;
        let mut bins = vec![Complex::new(0.0, 0.0); n];
        bins[3] = Complex::new(5.0, 0.0);
        bins[7] = Complex::new(5.0, 0.0);
        let s = Spectrum {
            bin_freqs_hz: (0..n).map(|k| k as f64 / n as f64).collect(),
            complex_bins: bins,
            n_fft: n,
            sample_rate_hz: 1.0,
        };
        assert_eq!(peak_tone(&s).unwrap().bin, 3);
    }

    #[test]
    fn peak_tone_rejects_all_zero() {
        let s = spectrum(&Waveform::new(vec![0.0; 64], 1.0), 64).unwrap();
        assert!(matches!(peak_tone(&s), Err(Error::AllZeroSpectrum)));
    }

    #[test]
    fn tone_power_reference_values() {
        let n = 4096;
        let s = spectrum(&coherent_sine(n, 64, 1.0), n).unwrap();
        let p = tone_power_dbm(&s, 64.0 / n as f64, 50.0).unwrap();
        assert!((p - 10.0).abs() < 1e-9, "{p}");
        let s = spectrum(&coherent_sine(n, 64, 0.1), n).unwrap();
        let p = tone_power_dbm(&s, 64.0 / n as f64, 50.0).unwrap();
        assert!((p + 10.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn tone_power_rejects_off_grid_frequency() {
        let n = 4096;
        let s = spectrum(&coherent_sine(n, 64, 1.0), n).unwrap();
        let off = 64.5 / n as f64;
        assert!(matches!(
            tone_power_dbm(&s, off, 50.0),
            Err(Error::IncoherentTone { .. })
        ));
    }

    #[test]
    fn gain_of_scaled_output() {
        let n = 4096;
        let x = coherent_sine(n, 50, 0.1);
        let y = Waveform::new(x.samples.iter().map(|v| 10.0 * v).collect(), 1.0);
        let g = gain_db(&x, &y, n, 50.0).unwrap();
        assert!((g.gain_db - 20.0).abs() < 1e-9);
        let g = gain_db(&x, &x.clone(), n, 50.0).unwrap();
        assert!(g.gain_db.abs() < 1e-9);
    }

    #[test]
    fn freq_resolution_values() {
        assert_eq!(freq_resolution(25e9, 25_000), 1e6);
        assert_eq!(freq_resolution(1000.0, 1000), 1.0);
        let d1 = freq_resolution(1.0, 4096);
        let d2 = freq_resolution(1.0, 8192);
        assert!((d1 / d2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oip3_formula_arithmetic() {
        assert_eq!(oip3_from_powers(-7.0, -7.0), -7.0);
        assert_eq!(oip3_from_powers(10.0, -30.0), 30.0);
        // Affine in a common offset: +c on both powers adds +c.
        let base = oip3_from_powers(2.0, -40.0);
        let shifted = oip3_from_powers(2.0 + 6.0, -40.0 + 6.0);
        assert!((shifted - base - 6.0).abs() < 1e-12);
    }

    #[test]
    fn measured_oip3_matches_analytic_on_memoryless_cubic() {
        let dut = DutSpec::memoryless(10.0, -20.0);
        let n = 4096;
        let (k1, k2) = (99, 101);
        let (f1, f2) = (k1 as f64 / n as f64, k2 as f64 / n as f64);
        let stim = siggen::gen_dual_tone(n, f1, f2, 0.01, 1.0).unwrap();
        let resp = dutsim::simulate(&dut, &stim, 0).unwrap();
        let m = oip3_dbm(&stim, &resp, f1, f2, n, 50.0).unwrap();
        let analytic = dutsim::analytic_oip3_dbm(&dut, f1, 50.0).unwrap().unwrap_dbm();
        assert!(
            (m.oip3_dbm - analytic).abs() < 0.1,
            "measured {} vs analytic {}",
            m.oip3_dbm,
            analytic
        );
        assert!(m.p_im3_upper_dbm.is_some());
    }

    #[test]
    fn oip3_unreliable_on_linear_device() {
        // No cubic term: the IM3 bin holds nothing but roundoff.
        let dut = DutSpec::memoryless(10.0, 0.0);
        let n = 4096;
        let (f1, f2) = (99.0 / n as f64, 101.0 / n as f64);
        let stim = siggen::gen_dual_tone(n, f1, f2, 0.01, 1.0).unwrap();
        let resp = dutsim::simulate(&dut, &stim, 0).unwrap();
        let r = oip3_dbm(&stim, &resp, f1, f2, n, 50.0);
        assert!(matches!(r, Err(Error::UnreliableIm3 { .. })), "{r:?}");
    }

    #[test]
    fn oip3_rejects_misordered_tones() {
        let n = 256;
        let (f1, f2) = (30.0 / n as f64, 20.0 / n as f64);
        let w = coherent_sine(n, 25, 0.1);
        assert!(matches!(
            oip3_dbm(&w, &w.clone(), f1, f2, n, 50.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gain_curve_self_consistent_with_device_as_model() {
        let dut = DutSpec { noise_sigma_v: 0.0, ..DutSpec::reference_amplifier() };
        let cfg = CurveConfig { skip: 64, margin: 64, ..CurveConfig::new(1024, 50.0, 0) };
        let freqs: Vec<f64> = (1..=5).map(|k| 10.0 * k as f64 / 1024.0).collect();
        let curve =
            gain_frequency_curve(&dut, &dut, &freqs, 0.01, 1.0, &cfg).unwrap();
        assert_eq!(curve.points.len(), 5);
        for p in &curve.points {
            assert!(
                (p.measured - p.predicted).abs() < 1e-9,
                "measured {} vs predicted {} at {}",
                p.measured,
                p.predicted,
                p.x
            );
        }
    }

    #[test]
    fn gain_curve_tracks_analytic_small_signal_gain() {
        let dut = DutSpec { noise_sigma_v: 0.0, ..DutSpec::reference_amplifier() };
        let n = 4096;
        let cfg = CurveConfig::new(n, 50.0, 3);
        let freqs: Vec<f64> = (1..=20).map(|k| (k * 24) as f64 / n as f64).collect();
        let amp = dbm_to_amplitude(-20.0, 50.0).unwrap();
        let curve = gain_frequency_curve(&dut, &dut, &freqs, amp, 1.0, &cfg).unwrap();
        for p in &curve.points {
            let analytic = dutsim::analytic_small_signal_gain_db(&dut, p.x, 1.0);
            assert!(
                (p.measured - analytic).abs() < 0.1,
                "f {} measured {} analytic {}",
                p.x,
                p.measured,
                analytic
            );
        }
    }

    #[test]
    fn power_curve_flat_for_linear_device_and_compressive_otherwise() {
        let n = 2048;
        let cfg = CurveConfig { skip: 128, margin: 64, ..CurveConfig::new(n, 50.0, 1) };
        let f = 100.0 / n as f64;
        let powers: Vec<f64> = (0..20).map(|i| -20.0 + 15.0 * i as f64 / 19.0).collect();

        let linear = DutSpec::memoryless(10.0, 0.0);
        let curve = gain_power_curve(&linear, &linear, f, &powers, 1.0, &cfg).unwrap();
        let gains: Vec<f64> = curve.points.iter().map(|p| p.measured).collect();
        let spread = gains.iter().cloned().fold(f64::MIN, f64::max)
            - gains.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.05, "linear device gain spread {spread}");

        let compressive = DutSpec::memoryless(10.0, -40.0 / 3.0);
        let curve =
            gain_power_curve(&compressive, &compressive, f, &powers, 1.0, &cfg).unwrap();
        for w in curve.points.windows(2) {
            assert!(
                w[1].measured <= w[0].measured + 1e-9,
                "gain rose with power: {} -> {}",
                w[0].measured,
                w[1].measured
            );
        }
    }

    #[test]
    fn oip3_curve_self_consistent_with_device_as_model() {
        let dut = DutSpec { noise_sigma_v: 0.0, ..DutSpec::reference_amplifier() };
        let n = 4096;
        let cfg = CurveConfig::new(n, 50.0, 5);
        let pairs: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let c = 40 + 60 * i;
                ((c - 1) as f64 / n as f64, (c + 1) as f64 / n as f64)
            })
            .collect();
        let sweep = oip3_frequency_curve(&dut, &dut, &pairs, 0.05, 1.0, &cfg).unwrap();
        assert!(sweep.flagged.is_empty(), "{:?}", sweep.flagged);
        for p in &sweep.curve.points {
            assert!((p.measured - p.predicted).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_requires_increasing_x() {
        let pts = vec![
            CurvePoint { x: 1.0, measured: 0.0, predicted: 0.0 },
            CurvePoint { x: 1.0, measured: 0.0, predicted: 0.0 },
        ];
        assert!(MetricCurve::new(CurveKind::GainVsFreq, pts).is_err());
    }
}
