//! The four subcommands: `generate`, `train`, `eval`, `gradcheck`.

use std::fs;
use std::path::{Path, PathBuf};

use rfnoise_core::dutsim::{analytic_oip3_dbm, analytic_small_signal_gain_db, Oip3};
use rfnoise_core::metrics::{
    gain_frequency_curve, gain_power_curve, oip3_frequency_curve, spectrum, CurveConfig,
    MetricCurve,
};
use rfnoise_core::neuralnet::{
    dataset_mse, grad_check, predict_sequence, train, ArchSpec, ModelArtifact,
};
use rfnoise_core::pipeline::{
    align, estimate_delay, extract_windows, fit_norm_stats, NormStats, WindowedDataset,
};
use rfnoise_core::testbench::{
    amp_sweep_powers, build_dataset_suite, dual_tone_pairs, read_capture_csv, read_manifest,
    sine_sweep_freqs, CapturePair, ManifestEntry, WaveformKind, MANIFEST_FILE,
};
use rfnoise_core::{seed, Waveform};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::logging::Logger;
use crate::svg::{line_plot, Series};

// ---------------------------------------------------------------------------
// Output-directory lock
// ---------------------------------------------------------------------------

/// Guard against concurrent invocations writing the same output directory.
/// The lock file disappears when the command finishes.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(".rfnoise.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::io(format!(
                "{} is locked by another invocation (stale? remove {})",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn cmd_generate(cfg: &RunConfig, log: &Logger) -> CliResult<Vec<ManifestEntry>> {
    let _lock = DirLock::acquire(&cfg.paths.data_dir)?;
    let entries = build_dataset_suite(&cfg.plan, &cfg.dut, &cfg.paths.data_dir, cfg.seed)?;
    let mut by_kind = std::collections::BTreeMap::new();
    for e in &entries {
        *by_kind.entry(e.kind.to_string()).or_insert(0usize) += 1;
    }
    log.info(&format!(
        "generated {} captures into {} ({})",
        entries.len(),
        cfg.paths.data_dir.display(),
        by_kind
            .iter()
            .map(|(k, n)| format!("{k}: {n}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    Ok(entries)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn load_aligned(cfg: &RunConfig, entry: &ManifestEntry) -> CliResult<CapturePair> {
    let path = cfg.paths.data_dir.join(&entry.path);
    let pair = read_capture_csv(&path)?;
    let est = estimate_delay(&pair.stimulus, &pair.response, cfg.train.max_lag)?;
    Ok(align(&pair, est.lag)?)
}

fn load_aligned_at(cfg: &RunConfig, entry: &ManifestEntry, lag: i64) -> CliResult<CapturePair> {
    let pair = read_capture_csv(&cfg.paths.data_dir.join(&entry.path))?;
    Ok(align(&pair, lag)?)
}

/// The rig delay, taken as the median estimate over the broadband
/// training captures. Band-limited test signals have wide autocorrelation,
/// which drags their own correlation peak a sample or two late, so test
/// captures are aligned with this consensus value instead of a per-file
/// estimate.
fn consensus_training_lag(cfg: &RunConfig, manifest: &[ManifestEntry]) -> CliResult<i64> {
    let uniform = uniform_entries(manifest);
    if uniform.is_empty() {
        return Err(CliError::config("manifest has no uniform-noise captures"));
    }
    let mut lags = Vec::new();
    for e in uniform.iter().take(5) {
        let pair = read_capture_csv(&cfg.paths.data_dir.join(&e.path))?;
        lags.push(estimate_delay(&pair.stimulus, &pair.response, cfg.train.max_lag)?.lag);
    }
    lags.sort_unstable();
    Ok(lags[lags.len() / 2])
}

fn windows_for(
    cfg: &RunConfig,
    entries: &[&ManifestEntry],
    stats: &NormStats,
    seed_tag: u64,
) -> CliResult<WindowedDataset> {
    let mut ds = WindowedDataset::empty(cfg.train.window);
    for e in entries {
        let pair = load_aligned(cfg, e)?;
        let part = extract_windows(
            &pair,
            stats,
            cfg.train.window,
            cfg.train.windows_per_file,
            seed::split(seed::split(cfg.seed, seed_tag), e.capture_index as u64),
        )?;
        ds.extend(&part)?;
    }
    Ok(ds)
}

/// Uniform-noise manifest entries in capture order.
fn uniform_entries(entries: &[ManifestEntry]) -> Vec<&ManifestEntry> {
    entries.iter().filter(|e| e.kind == WaveformKind::UniformNoise).collect()
}

/// Delay-compensate, normalize, window, train, and persist the artifact
/// plus the per-epoch history CSV. Returns the trained artifact.
pub fn cmd_train(cfg: &RunConfig, log: &Logger) -> CliResult<ModelArtifact> {
    let _lock = DirLock::acquire(&cfg.paths.report_dir)?;
    let manifest = read_manifest(&cfg.paths.data_dir.join(MANIFEST_FILE))?;
    let uniform = uniform_entries(&manifest);
    let needed = cfg.train.train_files + cfg.train.val_files;
    if uniform.len() < needed {
        return Err(CliError::config(format!(
            "manifest has {} uniform-noise captures, split needs {needed}",
            uniform.len()
        )));
    }
    let train_entries = &uniform[..cfg.train.train_files];
    let val_entries = &uniform[cfg.train.train_files..needed];

    // Normalization statistics come from the training captures only.
    let mut aligned_train = Vec::with_capacity(train_entries.len());
    for e in train_entries {
        aligned_train.push(load_aligned(cfg, e)?);
    }
    let stats = fit_norm_stats(&aligned_train)?;
    log.debug(&format!(
        "norm stats: in [{:.4}, {:.4}], out [{:.4}, {:.4}]",
        stats.in_min, stats.in_max, stats.out_min, stats.out_max
    ));

    let mut train_ds = WindowedDataset::empty(cfg.train.window);
    for (pair, e) in aligned_train.iter().zip(train_entries) {
        let part = extract_windows(
            pair,
            &stats,
            cfg.train.window,
            cfg.train.windows_per_file,
            seed::split(seed::split(cfg.seed, 1), e.capture_index as u64),
        )?;
        train_ds.extend(&part)?;
    }
    let val_ds = windows_for(cfg, val_entries, &stats, 2)?;
    log.info(&format!(
        "training on {} windows from {} files, validating on {} windows from {} files",
        train_ds.len(),
        train_entries.len(),
        val_ds.len(),
        val_entries.len()
    ));

    let arch = cfg.arch.to_arch_spec(cfg.train.window)?;
    let train_cfg = cfg.train.to_train_config(seed::split(cfg.seed, 3));
    let t0 = std::time::Instant::now();
    let model = train(&arch, &train_ds, &val_ds, stats, &train_cfg)?;
    log.info(&format!("trained {} epochs in {:.1}s", cfg.train.epochs, t0.elapsed().as_secs_f64()));

    if let Some(parent) = cfg.paths.model_path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("{}: {e}", parent.display())))?;
    }
    model.save(&cfg.paths.model_path)?;

    let mut history = String::from("epoch,train_mse,val_mse\n");
    for h in &model.history {
        history.push_str(&format!("{},{},{}\n", h.epoch, h.train_mse, h.val_mse));
    }
    let hist_path = cfg.paths.report_dir.join("history.csv");
    fs::write(&hist_path, history).map_err(|e| CliError::io(format!("{}: {e}", hist_path.display())))?;

    let best = model.history.iter().map(|h| h.val_mse).fold(f64::MAX, f64::min);
    log.info(&format!("best validation MSE {best:.3e}; model at {}", cfg.paths.model_path.display()));
    Ok(model)
}

/// Mean squared error of the model over every band-noise capture, on the
/// normalized scale (the time-domain test set).
pub fn band_test_mse(cfg: &RunConfig, model: &ModelArtifact) -> CliResult<f64> {
    let manifest = read_manifest(&cfg.paths.data_dir.join(MANIFEST_FILE))?;
    let band: Vec<&ManifestEntry> =
        manifest.iter().filter(|e| e.kind == WaveformKind::BandNoise).collect();
    if band.is_empty() {
        return Err(CliError::config("manifest has no band-noise captures"));
    }
    let lag = consensus_training_lag(cfg, &manifest)?;
    let stats = model.norm_stats;
    let mut ds = WindowedDataset::empty(cfg.train.window);
    for e in &band {
        let pair = load_aligned_at(cfg, e, lag)?;
        let part = extract_windows(
            &pair,
            &stats,
            cfg.train.window,
            cfg.train.windows_per_file,
            seed::split(seed::split(cfg.seed, 4), e.capture_index as u64),
        )?;
        ds.extend(&part)?;
    }
    Ok(dataset_mse(model, &ds)?)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalWhich {
    Time,
    GainFreq,
    GainPower,
    Oip3,
}

impl std::str::FromStr for EvalWhich {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "time" => EvalWhich::Time,
            "gain_freq" => EvalWhich::GainFreq,
            "gain_power" => EvalWhich::GainPower,
            "oip3" => EvalWhich::Oip3,
            other => return Err(format!("unknown eval mode `{other}`")),
        })
    }
}

fn write_report(dir: &Path, name: &str, content: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn curve_config(cfg: &RunConfig, tag: u64) -> CurveConfig {
    CurveConfig {
        skip: cfg.train.window.max(1024),
        ..CurveConfig::new(cfg.plan.eval_n_fft, cfg.plan.z_ohm, seed::split(cfg.seed, tag))
    }
}

fn curve_series<'a>(curve: &MetricCurve, measured: &'a mut Vec<(f64, f64)>, predicted: &'a mut Vec<(f64, f64)>) {
    *measured = curve.points.iter().map(|p| (p.x, p.measured)).collect();
    *predicted = curve.points.iter().map(|p| (p.x, p.predicted)).collect();
}

pub fn cmd_eval(cfg: &RunConfig, which: EvalWhich, log: &Logger) -> CliResult<()> {
    let _lock = DirLock::acquire(&cfg.paths.report_dir)?;
    let model = ModelArtifact::load(&cfg.paths.model_path)?;
    if model.arch.input_width != cfg.train.window {
        return Err(CliError::config(format!(
            "model window {} does not match config window {}",
            model.arch.input_width, cfg.train.window
        )));
    }
    match which {
        EvalWhich::Time => eval_time(cfg, &model, log),
        EvalWhich::GainFreq => eval_gain_freq(cfg, &model, log),
        EvalWhich::GainPower => eval_gain_power(cfg, &model, log),
        EvalWhich::Oip3 => eval_oip3(cfg, &model, log),
    }
}

/// Time-domain report: measured-vs-predicted waveform overlay, spectrum
/// overlay, and residual CSV, for one validation (uniform-noise) capture
/// and one band-noise capture.
fn eval_time(cfg: &RunConfig, model: &ModelArtifact, log: &Logger) -> CliResult<()> {
    let manifest = read_manifest(&cfg.paths.data_dir.join(MANIFEST_FILE))?;
    let uniform = uniform_entries(&manifest);
    let val_entry = uniform
        .get(cfg.train.train_files)
        .copied()
        .ok_or_else(|| CliError::config("no validation capture beyond the training split"))?;
    let band_entry = manifest
        .iter()
        .find(|e| e.kind == WaveformKind::BandNoise)
        .ok_or_else(|| CliError::config("manifest has no band-noise captures"))?;
    let lag = consensus_training_lag(cfg, &manifest)?;

    for (tag, entry) in [("uniform", val_entry), ("band", band_entry)] {
        let pair = load_aligned_at(cfg, entry, lag)?;
        let n = cfg.eval.predict_points;
        let start = cfg.train.window - 1;
        if pair.len() < start + n {
            return Err(CliError::config(format!(
                "capture {} too short for {n} prediction points",
                entry.capture_index
            )));
        }
        let predicted = predict_sequence(model, &pair.stimulus, n, start)?;
        let measured =
            Waveform::new(pair.response.samples[start..start + n].to_vec(), pair.response.sample_rate_hz);

        // Waveform overlay over the first time_points samples.
        let k = cfg.eval.time_points.min(n);
        let m_pts: Vec<(f64, f64)> =
            (0..k).map(|i| (i as f64, measured.samples[i])).collect();
        let p_pts: Vec<(f64, f64)> =
            (0..k).map(|i| (i as f64, predicted.samples[i])).collect();
        line_plot(
            &cfg.paths.report_dir.join(format!("waveform_overlay_{tag}.svg")),
            &format!("Time-domain prediction ({tag} noise)"),
            "sample",
            "volts",
            &[
                Series { label: "measured", color: "#1f77b4", points: &m_pts },
                Series { label: "predicted", color: "#d62728", points: &p_pts },
            ],
        )?;

        // Spectrum overlay over all predicted points, in dB.
        let ms = spectrum(&measured, n)?;
        let ps = spectrum(&predicted, n)?;
        let to_db = |s: &rfnoise_core::metrics::Spectrum| -> Vec<(f64, f64)> {
            (1..n / 2)
                .map(|k| {
                    let amp = s.amplitude_at_bin(k);
                    (s.bin_freqs_hz[k], 20.0 * amp.max(1e-12).log10())
                })
                .collect()
        };
        let m_db = to_db(&ms);
        let p_db = to_db(&ps);
        line_plot(
            &cfg.paths.report_dir.join(format!("spectrum_overlay_{tag}.svg")),
            &format!("Spectrum of {n} predicted points ({tag} noise)"),
            "frequency (Hz)",
            "amplitude (dBV)",
            &[
                Series { label: "measured", color: "#1f77b4", points: &m_db },
                Series { label: "predicted", color: "#d62728", points: &p_db },
            ],
        )?;

        let mut residual = String::from("index,measured,predicted\n");
        for i in 0..n {
            residual.push_str(&format!("{i},{},{}\n", measured.samples[i], predicted.samples[i]));
        }
        write_report(&cfg.paths.report_dir, &format!("residual_{tag}.csv"), &residual)?;

        let mse: f64 = measured
            .samples
            .iter()
            .zip(predicted.samples.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        log.info(&format!("{tag}: raw-scale prediction MSE over {n} points = {mse:.3e} V^2"));
    }

    let band_mse = band_test_mse(cfg, model)?;
    log.info(&format!("band-noise test MSE (normalized) = {band_mse:.3e}"));
    Ok(())
}

fn eval_gain_freq(cfg: &RunConfig, model: &ModelArtifact, log: &Logger) -> CliResult<()> {
    let mut sweep_plan = cfg.plan.clone();
    sweep_plan.sine_sweep.count = cfg.eval.sweep_points;
    let freqs = sine_sweep_freqs(&sweep_plan)?;
    let amplitude = rfnoise_core::siggen::dbm_to_amplitude(cfg.eval.gain_sweep_dbm, cfg.plan.z_ohm)?;
    let curve = gain_frequency_curve(
        model,
        &cfg.dut,
        &freqs,
        amplitude,
        cfg.plan.sample_rate_hz,
        &curve_config(cfg, 10),
    )?;
    write_report(&cfg.paths.report_dir, "gain_freq.csv", &curve.to_csv())?;

    let analytic: Vec<(f64, f64)> = freqs
        .iter()
        .map(|&f| (f, analytic_small_signal_gain_db(&cfg.dut, f, cfg.plan.sample_rate_hz)))
        .collect();
    let (mut m, mut p) = (Vec::new(), Vec::new());
    curve_series(&curve, &mut m, &mut p);
    line_plot(
        &cfg.paths.report_dir.join("gain_freq.svg"),
        "Gain vs frequency",
        "frequency (Hz)",
        "gain (dB)",
        &[
            Series { label: "measured", color: "#1f77b4", points: &m },
            Series { label: "predicted", color: "#d62728", points: &p },
            Series { label: "analytic", color: "#2ca02c", points: &analytic },
        ],
    )?;
    log.info(&format!(
        "gain-frequency curve over {} points; max |measured - predicted| = {:.3} dB",
        curve.points.len(),
        curve.max_abs_deviation()
    ));
    Ok(())
}

fn eval_gain_power(cfg: &RunConfig, model: &ModelArtifact, log: &Logger) -> CliResult<()> {
    for (i, sweep) in cfg.plan.amp_sweeps.iter().enumerate() {
        let mut sweep = *sweep;
        sweep.count = cfg.eval.sweep_points;
        let powers = amp_sweep_powers(&sweep);
        let f_snapped = rfnoise_core::testbench::snap_to_bin(
            sweep.f_hz,
            cfg.plan.sample_rate_hz,
            cfg.plan.eval_n_fft,
        );
        let curve = gain_power_curve(
            model,
            &cfg.dut,
            f_snapped,
            &powers,
            cfg.plan.sample_rate_hz,
            &curve_config(cfg, 20 + i as u64),
        )?;
        write_report(&cfg.paths.report_dir, &format!("gain_power_{i}.csv"), &curve.to_csv())?;

        let analytic_gain = analytic_small_signal_gain_db(&cfg.dut, f_snapped, cfg.plan.sample_rate_hz);
        let analytic: Vec<(f64, f64)> = powers.iter().map(|&p| (p, analytic_gain)).collect();
        let (mut m, mut p) = (Vec::new(), Vec::new());
        curve_series(&curve, &mut m, &mut p);
        line_plot(
            &cfg.paths.report_dir.join(format!("gain_power_{i}.svg")),
            &format!("Gain vs input power at {f_snapped} Hz"),
            "input power (dBm)",
            "gain (dB)",
            &[
                Series { label: "measured", color: "#1f77b4", points: &m },
                Series { label: "predicted", color: "#d62728", points: &p },
                Series { label: "small-signal analytic", color: "#2ca02c", points: &analytic },
            ],
        )?;
        log.info(&format!(
            "gain-power curve {i} at {f_snapped} Hz; max |measured - predicted| = {:.3} dB",
            curve.max_abs_deviation()
        ));
    }
    Ok(())
}

fn eval_oip3(cfg: &RunConfig, model: &ModelArtifact, log: &Logger) -> CliResult<()> {
    let mut sweep_plan = cfg.plan.clone();
    sweep_plan.dual_tone.count = cfg.eval.sweep_points;
    let pairs = dual_tone_pairs(&sweep_plan)?;
    let sweep = oip3_frequency_curve(
        model,
        &cfg.dut,
        &pairs,
        cfg.eval.dual_tone_vpp / 2.0,
        cfg.plan.sample_rate_hz,
        &curve_config(cfg, 30),
    )?;
    write_report(&cfg.paths.report_dir, "oip3.csv", &sweep.curve.to_csv())?;

    let analytic: Vec<(f64, f64)> = sweep
        .curve
        .points
        .iter()
        .map(|p| {
            let v = match analytic_oip3_dbm(&cfg.dut, p.x, cfg.plan.z_ohm) {
                Ok(Oip3::Dbm(v)) => v,
                _ => f64::NAN,
            };
            (p.x, v)
        })
        .collect();
    let (mut m, mut p) = (Vec::new(), Vec::new());
    curve_series(&sweep.curve, &mut m, &mut p);
    line_plot(
        &cfg.paths.report_dir.join("oip3.svg"),
        "OIP3 vs frequency",
        "tone-pair center (Hz)",
        "OIP3 (dBm)",
        &[
            Series { label: "measured", color: "#1f77b4", points: &m },
            Series { label: "predicted", color: "#d62728", points: &p },
            Series { label: "analytic", color: "#2ca02c", points: &analytic },
        ],
    )?;
    for flag in &sweep.flagged {
        log.info(&format!(
            "OIP3 point at {} Hz skipped: {}",
            flag.f_center_hz, flag.detail
        ));
    }
    log.info(&format!(
        "OIP3 curve over {} points ({} flagged); max |measured - predicted| = {:.3} dB",
        sweep.curve.points.len(),
        sweep.flagged.len(),
        sweep.curve.max_abs_deviation()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Numerically verify backprop on scaled-down copies of both
/// architectures. Fails (for the caller to turn into a nonzero exit) if
/// any relative error reaches 1e-5.
pub fn cmd_gradcheck(log: &Logger) -> CliResult<()> {
    let checks = [
        ("residual", ArchSpec::residual(8, 2).with_input_width(16)),
        ("autoencoder", ArchSpec::autoencoder(vec![8, 4, 8]).with_input_width(16)),
    ];
    let mut worst = 0.0f64;
    for (name, arch) in checks {
        let err = grad_check(&arch, 1e-5)?;
        log.info(&format!("gradcheck {name}: max relative error {err:.3e}"));
        worst = worst.max(err);
    }
    if worst >= 1e-5 {
        return Err(CliError::config(format!(
            "gradient check failed: max relative error {worst:.3e} >= 1e-5"
        )));
    }
    log.info("gradcheck passed");
    Ok(())
}
