//! Declarative run configuration: one TOML file with `dut`, `plan`,
//! `train`, `arch`, `eval`, and `paths` sections. Command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rfnoise_core::dutsim::DutSpec;
use rfnoise_core::neuralnet::{ArchKind, ArchSpec, TrainConfig};
use rfnoise_core::testbench::DatasetPlan;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub model_path: PathBuf,
    pub report_dir: PathBuf,
}

/// Training section: optimizer settings plus the file split and windowing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Leading uniform-noise files used for training.
    pub train_files: usize,
    /// Uniform-noise files after those used for validation.
    pub val_files: usize,
    /// Windows drawn per capture.
    pub windows_per_file: usize,
    /// Input window width (network input width).
    pub window: usize,
    /// Cross-correlation search half-width for delay compensation.
    pub max_lag: usize,
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchSection {
    /// "residual" or "autoencoder".
    pub kind: String,
    #[serde(default)]
    pub width: usize,
    #[serde(default)]
    pub blocks: usize,
    #[serde(default)]
    pub widths: Vec<usize>,
}

impl ArchSection {
    pub fn to_arch_spec(&self, input_width: usize) -> CliResult<ArchSpec> {
        let kind = match self.kind.as_str() {
            "residual" => ArchKind::Residual { width: self.width, blocks: self.blocks },
            "autoencoder" => ArchKind::AutoEncoder { widths: self.widths.clone() },
            other => {
                return Err(CliError::config(format!(
                    "arch.kind must be `residual` or `autoencoder`, found `{other}`"
                )))
            }
        };
        let spec = ArchSpec { kind, input_width, output_width: 1 };
        spec.validate().map_err(CliError::from)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    /// Sweep points for the gain/OIP3 frequency curves.
    pub sweep_points: usize,
    /// Consecutive points predicted for time-domain evaluation.
    pub predict_points: usize,
    /// Points plotted in the time-domain overlay.
    pub time_points: usize,
    /// Input power of the gain sweeps, dBm.
    pub gain_sweep_dbm: f64,
    /// Per-tone peak-to-peak amplitude of the OIP3 dual-tone sweep, volts.
    pub dual_tone_vpp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub dut: DutSpec,
    pub plan: DatasetPlan,
    pub train: TrainSection,
    pub arch: ArchSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Desk-scale defaults: normalized sample rate, 8192-sample files,
    /// 26 uniform-noise files split 20/6, a width-128 four-block residual
    /// network, 30 epochs.
    pub fn desk_default() -> Self {
        RunConfig {
            seed: 424242,
            paths: PathsSection {
                data_dir: PathBuf::from("runs/desk/data"),
                model_path: PathBuf::from("runs/desk/model.json"),
                report_dir: PathBuf::from("runs/desk/report"),
            },
            dut: DutSpec::reference_amplifier(),
            plan: DatasetPlan::desk_scale(),
            train: TrainSection {
                batch_size: 256,
                epochs: 30,
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                train_files: 20,
                val_files: 6,
                windows_per_file: 2048,
                window: 1024,
                max_lag: 512,
            },
            arch: ArchSection {
                kind: "residual".into(),
                width: 128,
                blocks: 4,
                widths: Vec::new(),
            },
            eval: EvalSection {
                sweep_points: 100,
                predict_points: 5000,
                time_points: 500,
                gain_sweep_dbm: -20.0,
                dual_tone_vpp: 0.2,
            },
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.dut.validate()?;
        self.plan.validate()?;
        if self.train.train_files + self.train.val_files > self.plan.training.count {
            return Err(CliError::config(format!(
                "train.train_files + train.val_files = {} exceeds plan.training.count = {}",
                self.train.train_files + self.train.val_files,
                self.plan.training.count
            )));
        }
        if self.train.train_files == 0 || self.train.val_files == 0 {
            return Err(CliError::config("need at least one training and one validation file"));
        }
        if self.train.window + 1 > self.plan.samples_per_file {
            return Err(CliError::config(format!(
                "window {} does not fit in {}-sample files",
                self.train.window, self.plan.samples_per_file
            )));
        }
        self.train.to_train_config(0).validate()?;
        self.arch.to_arch_spec(self.train.window)?;
        if self.eval.sweep_points == 0 || self.eval.predict_points < self.plan.eval_n_fft {
            return Err(CliError::config(format!(
                "eval.predict_points {} must cover eval_n_fft {}",
                self.eval.predict_points, self.plan.eval_n_fft
            )));
        }
        Ok(())
    }

    /// Re-root all output paths under `out`.
    pub fn with_out_root(mut self, out: &Path) -> Self {
        self.paths.data_dir = out.join("data");
        self.paths.model_path = out.join("model.json");
        self.paths.report_dir = out.join("report");
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid() {
        RunConfig::desk_default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::desk_default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn rejects_oversubscribed_split() {
        let mut cfg = RunConfig::desk_default();
        cfg.train.train_files = 25;
        cfg.train.val_files = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn arch_section_parses_both_kinds() {
        let a = ArchSection { kind: "residual".into(), width: 8, blocks: 2, widths: vec![] };
        a.to_arch_spec(64).unwrap();
        let b = ArchSection {
            kind: "autoencoder".into(),
            width: 0,
            blocks: 0,
            widths: vec![16, 8],
        };
        b.to_arch_spec(64).unwrap();
        let c = ArchSection { kind: "mamba".into(), width: 0, blocks: 0, widths: vec![] };
        assert!(c.to_arch_spec(64).is_err());
    }
}
