//! Property tests for the cross-module invariants.

use proptest::prelude::*;

use rfnoise_core::metrics;
use rfnoise_core::pipeline::{self, NormStats};
use rfnoise_core::siggen;
use rfnoise_core::testbench::{
    read_capture_csv, write_capture_csv, CaptureMeta, CapturePair,
};
use rfnoise_core::Waveform;

fn shift(x: &Waveform, d: i64, sign: f64) -> Waveform {
    let n = x.len() as i64;
    let samples = (0..n)
        .map(|i| {
            let j = i - d;
            if (0..n).contains(&j) {
                sign * x.samples[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(samples, x.sample_rate_hz)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Delay estimation recovers any shift and sign of a noise signal.
    #[test]
    fn delay_recovers_shift_and_sign(
        d in -128i64..=128,
        invert in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let x = siggen::gen_uniform_noise(2048, 1.0, 1.0, seed).unwrap();
        let y = shift(&x, d, if invert { -1.0 } else { 1.0 });
        let est = pipeline::estimate_delay(&x, &y, 128).unwrap();
        prop_assert_eq!(est.lag, d);
        prop_assert_eq!(est.sign, if invert { -1 } else { 1 });
    }

    /// Normalization is strictly monotone, so it never moves an argmax.
    #[test]
    fn normalization_is_monotone(values in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        let stats = NormStats { in_min: -100.0, in_max: 100.0, out_min: -1.0, out_max: 1.0 };
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let mapped: Vec<f64> = values.iter().map(|&v| stats.apply_input(v)).collect();
        prop_assert_eq!(argmax(&values), argmax(&mapped));
        for w in values.windows(2) {
            let (a, b) = (stats.apply_input(w[0]), stats.apply_input(w[1]));
            prop_assert_eq!(a < b, w[0] < w[1]);
        }
    }

    /// Affine normalization round-trips any finite value.
    #[test]
    fn normalization_round_trips(v in -1e12f64..1e12) {
        let stats = NormStats { in_min: -0.6, in_max: 0.6, out_min: -3.3, out_max: 3.4 };
        let tol = 1e-12 * v.abs().max(1.0);
        prop_assert!((stats.invert_input(stats.apply_input(v)) - v).abs() < tol);
        prop_assert!((stats.invert_output(stats.apply_output(v)) - v).abs() < tol);
    }

    /// Parseval's identity holds for every spectrum.
    #[test]
    fn parseval_holds(seed in 0u64..500, log2n in 6u32..12) {
        let n = 1usize << log2n;
        let w = siggen::gen_uniform_noise(n, 1.0, 1.0, seed).unwrap();
        let s = metrics::spectrum(&w, n).unwrap();
        let time: f64 = w.samples.iter().map(|x| x * x).sum();
        let freq: f64 = s.complex_bins.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
    }

    /// Uniform noise never leaves [-A, A] and is seed-deterministic.
    #[test]
    fn uniform_noise_bounded(amp in 0.0f64..10.0, seed in any::<u64>()) {
        let w = siggen::gen_uniform_noise(512, amp, 1.0, seed).unwrap();
        prop_assert!(w.samples.iter().all(|&x| x.abs() <= amp));
        let w2 = siggen::gen_uniform_noise(512, amp, 1.0, seed).unwrap();
        prop_assert_eq!(w, w2);
    }
}

proptest! {
    // File-backed cases are slower; fewer of them.
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Capture CSV round-trips arbitrary finite samples bit-exactly.
    #[test]
    fn capture_csv_round_trips_arbitrary_floats(
        stim in prop::collection::vec(
            prop::num::f64::POSITIVE | prop::num::f64::NEGATIVE | prop::num::f64::ZERO,
            1..64
        ),
        fs_exp in -9i32..9,
        seed in any::<u64>(),
    ) {
        let n = stim.len();
        let resp: Vec<f64> = stim.iter().map(|v| v * 0.5 + 1.0e-30).collect();
        let fs = 10f64.powi(fs_exp) * 3.0;
        let pair = CapturePair::new(
            Waveform::new(stim, fs),
            Waveform::new(resp, fs),
            CaptureMeta { seed, ..CaptureMeta::unknown() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_capture_csv(&pair, &path).unwrap();
        let back = read_capture_csv(&path).unwrap();
        prop_assert_eq!(back.len(), n);
        prop_assert_eq!(back, pair);
    }
}

/// The gain of an identity device is 0 dB at every coherent frequency and
/// amplitude.
#[test]
fn identity_device_gain_is_zero_everywhere() {
    let n = 1024;
    for bin in [3usize, 17, 101, 350, 511] {
        for amp in [0.01, 0.1, 1.0] {
            let f = bin as f64 / n as f64;
            let x = siggen::gen_sine(n, siggen::ToneSpec::new(f, amp), 1.0).unwrap();
            let g = metrics::gain_db(&x, &x.clone(), n, 50.0).unwrap();
            assert!(g.gain_db.abs() < 1e-9, "bin {bin} amp {amp}: {}", g.gain_db);
        }
    }
}
