//! Synthetic nonlinear amplifier with closed-form gain and OIP3 oracles.
//!
//! The device is a Wiener cascade: a short FIR pre-filter (the memory),
//! followed by a static odd-order polynomial `y = a1*u + a3*u^3`, an
//! integer sample delay, and additive Gaussian output noise. Keeping the
//! nonlinearity after the filter makes both the small-signal gain curve
//! and the two-tone intercept analytically tractable, so every
//! frequency-domain measurement has an exact target to validate against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::siggen::{amplitude_to_dbm, Waveform};

/// Parametric synthetic device under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutSpec {
    /// First-order voltage coefficient (linear gain); must be nonzero.
    pub a1: f64,
    /// Third-order voltage coefficient; negative for a compressive device.
    pub a3: f64,
    /// Feedforward FIR applied before the static nonlinearity.
    pub pre_filter: Vec<f64>,
    /// Output latency in whole samples.
    pub delay_samples: usize,
    /// Standard deviation of additive output noise, volts.
    pub noise_sigma_v: f64,
    /// Flip the sign of the (noiseless) response.
    pub inverting: bool,
}

/// Output-referred third-order intercept: a value in dBm, or no intercept
/// at all for a device with no cubic term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oip3 {
    Dbm(f64),
    Infinite,
}

impl Oip3 {
    /// The dBm value, panicking on `Infinite`. Test/report convenience.
    pub fn unwrap_dbm(self) -> f64 {
        match self {
            Oip3::Dbm(v) => v,
            Oip3::Infinite => panic!("OIP3 is infinite"),
        }
    }
}

impl DutSpec {
    /// Compressive reference amplifier used by the in-repo configs:
    /// ~20 dB small-signal gain, 30 dBm OIP3 into 50 ohms, a one-pole-style
    /// FIR that rolls off a few dB across the working band, 23 samples of
    /// latency, and 1 mV of output noise.
    pub fn reference_amplifier() -> Self {
        // Geometric taps r^k normalized to unit DC gain.
        let r: f64 = 0.5;
        let taps = 8;
        let sum: f64 = (0..taps).map(|k| r.powi(k)).sum();
        let pre_filter = (0..taps).map(|k| r.powi(k) / sum).collect();
        DutSpec {
            a1: 10.0,
            a3: -40.0 / 3.0,
            pre_filter,
            delay_samples: 23,
            noise_sigma_v: 1e-3,
            inverting: false,
        }
    }

    /// Memoryless pass-through device: `y = a1*x + a3*x^3`, no delay, no noise.
    pub fn memoryless(a1: f64, a3: f64) -> Self {
        DutSpec {
            a1,
            a3,
            pre_filter: vec![1.0],
            delay_samples: 0,
            noise_sigma_v: 0.0,
            inverting: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a1 == 0.0 {
            return Err(Error::InvalidDutSpec("a1 must be nonzero".into()));
        }
        if self.pre_filter.is_empty() || self.pre_filter.iter().all(|&h| h == 0.0) {
            return Err(Error::InvalidDutSpec(
                "pre_filter needs at least one nonzero coefficient".into(),
            ));
        }
        if self.noise_sigma_v < 0.0 {
            return Err(Error::InvalidDutSpec("noise_sigma_v must be >= 0".into()));
        }
        Ok(())
    }

    /// Complex frequency response of the pre-filter at `f_hz`.
    pub fn filter_response(&self, f_hz: f64, sample_rate_hz: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * f_hz / sample_rate_hz;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &h) in self.pre_filter.iter().enumerate() {
            let phase = w * k as f64;
            re += h * phase.cos();
            im -= h * phase.sin();
        }
        (re, im)
    }

    /// |H(f)| of the pre-filter.
    pub fn filter_magnitude(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let (re, im) = self.filter_response(f_hz, sample_rate_hz);
        (re * re + im * im).sqrt()
    }
}

/// Drive the device with a stimulus and return its response.
///
/// `response = delay(sign * (a1*u + a3*u^3)) + N(0, sigma^2)` with
/// `u = pre_filter (*) stimulus`. Filter warm-up and the delay are filled
/// with zeros, so the response has the stimulus's length and sample rate.
/// Deterministic for a fixed seed; with `noise_sigma_v == 0` the seed is
/// never consumed and the output is seed-independent.
pub fn simulate(dut: &DutSpec, stimulus: &Waveform, seed: u64) -> Result<Waveform> {
    dut.validate()?;
    if stimulus.is_empty() {
        return Err(Error::EmptyRequest);
    }
    let x = &stimulus.samples;
    let n = x.len();
    let sign = if dut.inverting { -1.0 } else { 1.0 };

    // FIR, static polynomial, delay in one pass.
    let mut response = vec![0.0; n];
    for i in 0..n {
        if i < dut.delay_samples {
            continue;
        }
        let j = i - dut.delay_samples;
        let mut u = 0.0;
        for (k, &h) in dut.pre_filter.iter().enumerate() {
            if k > j {
                break;
            }
            u += h * x[j - k];
        }
        response[i] = sign * (dut.a1 * u + dut.a3 * u * u * u);
    }

    if dut.noise_sigma_v > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spare: Option<f64> = None;
        for r in response.iter_mut() {
            let z = match spare.take() {
                Some(z) => z,
                None => {
                    // Box-Muller; u1 in (0, 1] keeps the log finite.
                    let u1 = 1.0 - rng.gen::<f64>();
                    let u2 = rng.gen::<f64>();
                    let mag = (-2.0 * u1.ln()).sqrt();
                    let ang = 2.0 * std::f64::consts::PI * u2;
                    spare = Some(mag * ang.sin());
                    mag * ang.cos()
                }
            };
            *r += dut.noise_sigma_v * z;
        }
    }

    Ok(Waveform::new(response, stimulus.sample_rate_hz))
}

/// Small-signal gain in dB at `f_hz`: `20*log10(|a1| * |H(f)|)`.
pub fn analytic_small_signal_gain_db(dut: &DutSpec, f_hz: f64, sample_rate_hz: f64) -> f64 {
    20.0 * (dut.a1.abs() * dut.filter_magnitude(f_hz, sample_rate_hz)).log10()
}

/// Output-referred third-order intercept in dBm.
///
/// Equating the extrapolated fundamental (slope 1) and IM3 (slope 3) lines
/// of `y = a1*u + a3*u^3` for two tones of post-filter amplitude B gives
/// `|a1|*B = (3/4)*|a3|*B^3` at the intercept, so the output amplitude
/// there is `A_out = |a1| * sqrt(4*|a1| / (3*|a3|))`. The filter magnitude
/// cancels: distortion is generated after the filter, so the intercept is
/// the same at every frequency where |H| is flat across the tone pair.
/// `f_hz` is accepted for interface symmetry with the gain oracle.
pub fn analytic_oip3_dbm(dut: &DutSpec, f_hz: f64, z_ohm: f64) -> Result<Oip3> {
    let _ = f_hz;
    dut.validate()?;
    if dut.a3 == 0.0 {
        return Ok(Oip3::Infinite);
    }
    let a1 = dut.a1.abs();
    let a_out = a1 * (4.0 * a1 / (3.0 * dut.a3.abs())).sqrt();
    Ok(Oip3::Dbm(amplitude_to_dbm(a_out, z_ohm)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::siggen::{self, ToneSpec};

    fn tone(n: usize, bin: usize, amp: f64) -> Waveform {
        let fs = 1.0;
        siggen::gen_sine(n, ToneSpec::new(bin as f64 * fs / n as f64, amp), fs).unwrap()
    }

    #[test]
    fn linear_memoryless_is_pure_scaling() {
        let dut = DutSpec::memoryless(10.0, 0.0);
        let x = siggen::gen_uniform_noise(512, 1.0, 1.0, 2).unwrap();
        let y = simulate(&dut, &x, 0).unwrap();
        for (xi, yi) in x.samples.iter().zip(y.samples.iter()) {
            assert_eq!(*yi, 10.0 * xi);
        }
    }

    #[test]
    fn single_tone_fundamental_matches_trig_expansion() {
        // u = A*sin gives a1*A + (3/4)*a3*A^3 at the fundamental; the FFT of
        // the simulated output is the brute-force side of the check.
        let (a1, a3, amp) = (10.0, -20.0, 0.01);
        let dut = DutSpec::memoryless(a1, a3);
        let n = 4096;
        let x = tone(n, 100, amp);
        let y = simulate(&dut, &x, 0).unwrap();
        let spec = metrics::spectrum(&y, n).unwrap();
        let measured = 2.0 * spec.complex_bins[100].norm() / n as f64;
        let expect = a1 * amp + 0.75 * a3 * amp.powi(3);
        assert!(
            (measured - expect).abs() / expect.abs() < 1e-6,
            "measured {measured}, expected {expect}"
        );
    }

    #[test]
    fn third_harmonic_matches_trig_expansion() {
        let (a1, a3, amp) = (10.0, -20.0, 0.05);
        let dut = DutSpec::memoryless(a1, a3);
        let n = 4096;
        let x = tone(n, 100, amp);
        let y = simulate(&dut, &x, 0).unwrap();
        let spec = metrics::spectrum(&y, n).unwrap();
        let h3 = 2.0 * spec.complex_bins[300].norm() / n as f64;
        let expect = (a3 * amp.powi(3) / 4.0).abs();
        assert!((h3 - expect).abs() / expect < 1e-6, "h3 {h3} vs {expect}");
    }

    #[test]
    fn delay_fills_with_zeros_and_shifts() {
        let mut dut = DutSpec::memoryless(2.0, 0.0);
        dut.delay_samples = 17;
        let x = siggen::gen_uniform_noise(256, 1.0, 1.0, 9).unwrap();
        let y = simulate(&dut, &x, 0).unwrap();
        assert!(y.samples[..17].iter().all(|&v| v == 0.0));
        for i in 17..256 {
            assert_eq!(y.samples[i], 2.0 * x.samples[i - 17]);
        }
    }

    #[test]
    fn noiseless_simulation_is_seed_independent() {
        let dut = DutSpec { noise_sigma_v: 0.0, ..DutSpec::reference_amplifier() };
        let x = siggen::gen_uniform_noise(1024, 0.6, 1.0, 4).unwrap();
        assert_eq!(simulate(&dut, &x, 1).unwrap(), simulate(&dut, &x, 2).unwrap());
    }

    #[test]
    fn noisy_simulation_is_seeded() {
        let dut = DutSpec::reference_amplifier();
        let x = siggen::gen_uniform_noise(1024, 0.6, 1.0, 4).unwrap();
        assert_eq!(simulate(&dut, &x, 7).unwrap(), simulate(&dut, &x, 7).unwrap());
        assert_ne!(simulate(&dut, &x, 7).unwrap(), simulate(&dut, &x, 8).unwrap());
    }

    #[test]
    fn linear_homogeneity() {
        let dut = DutSpec {
            a3: 0.0,
            noise_sigma_v: 0.0,
            ..DutSpec::reference_amplifier()
        };
        let x = siggen::gen_uniform_noise(512, 0.5, 1.0, 6).unwrap();
        let scaled = Waveform::new(x.samples.iter().map(|v| 2.0 * v).collect(), 1.0);
        let y1 = simulate(&dut, &x, 0).unwrap();
        let y2 = simulate(&dut, &scaled, 0).unwrap();
        for (a, b) in y1.samples.iter().zip(y2.samples.iter()) {
            assert_eq!(*b, 2.0 * a); // doubling is exact in binary floating point
        }
    }

    #[test]
    fn inverting_flips_sign_exactly() {
        let base = DutSpec { noise_sigma_v: 0.0, ..DutSpec::reference_amplifier() };
        let inv = DutSpec { inverting: true, ..base.clone() };
        let x = siggen::gen_uniform_noise(512, 0.6, 1.0, 12).unwrap();
        let y = simulate(&base, &x, 0).unwrap();
        let yi = simulate(&inv, &x, 0).unwrap();
        for (a, b) in y.samples.iter().zip(yi.samples.iter()) {
            assert_eq!(*b, -a);
        }
    }

    #[test]
    fn analytic_gain_identity_filter() {
        let dut = DutSpec::memoryless(10.0, 0.0);
        for f in [0.0, 0.1, 0.25, 0.49] {
            let g = analytic_small_signal_gain_db(&dut, f, 1.0);
            assert!((g - 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gain_averaging_filter() {
        let dut = DutSpec {
            pre_filter: vec![0.5, 0.5],
            ..DutSpec::memoryless(1.0, 0.0)
        };
        let g0 = analytic_small_signal_gain_db(&dut, 0.0, 1.0);
        assert!(g0.abs() < 1e-12, "DC gain {g0}");
        // |0.5 + 0.5*exp(-j*pi/2)| = sqrt(2)/2.
        let gq = analytic_small_signal_gain_db(&dut, 0.25, 1.0);
        let expect = 20.0 * (0.5f64 * 2f64.sqrt()).log10();
        assert!((gq - expect).abs() < 1e-12, "{gq} vs {expect}");
    }

    #[test]
    fn oip3_infinite_without_cubic_term() {
        let dut = DutSpec::memoryless(10.0, 0.0);
        assert_eq!(analytic_oip3_dbm(&dut, 0.1, 50.0).unwrap(), Oip3::Infinite);
    }

    #[test]
    fn oip3_gains_nine_db_when_a1_doubles() {
        let d1 = DutSpec::memoryless(10.0, -20.0);
        let d2 = DutSpec::memoryless(20.0, -20.0);
        let p1 = analytic_oip3_dbm(&d1, 0.1, 50.0).unwrap().unwrap_dbm();
        let p2 = analytic_oip3_dbm(&d2, 0.1, 50.0).unwrap().unwrap_dbm();
        assert!((p2 - p1 - 30.0 * 2f64.log10()).abs() < 1e-9, "{p1} {p2}");
    }

    #[test]
    fn reference_amplifier_hits_thirty_dbm_oip3() {
        let dut = DutSpec::reference_amplifier();
        let p = analytic_oip3_dbm(&dut, 0.05, 50.0).unwrap().unwrap_dbm();
        assert!((p - 30.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut dut = DutSpec::memoryless(0.0, 1.0);
        assert!(dut.validate().is_err());
        dut.a1 = 1.0;
        dut.pre_filter = vec![0.0, 0.0];
        assert!(dut.validate().is_err());
    }
}
