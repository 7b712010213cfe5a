//! Minimal logger: messages go to stderr at a verbosity chosen by the
//! `RFNOISE_LOG` environment variable (`quiet`, `info`, `debug`; default
//! `info`), and every message is appended with a timestamp to `run.log`
//! in the output directory. Timestamps never appear anywhere else, so all
//! other artifacts are byte-reproducible.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd)]
pub enum Level {
    Quiet,
    Info,
    Debug,
}

pub struct Logger {
    level: Level,
    log_file: Option<PathBuf>,
}

impl Logger {
    pub fn from_env(out_dir: Option<&Path>) -> Self {
        let level = match std::env::var("RFNOISE_LOG").as_deref() {
            Ok("quiet") | Ok("0") => Level::Quiet,
            Ok("debug") | Ok("2") => Level::Debug,
            _ => Level::Info,
        };
        Logger { level, log_file: out_dir.map(|d| d.join("run.log")) }
    }

    pub fn info(&self, msg: &str) {
        self.emit(Level::Info, msg);
    }

    pub fn debug(&self, msg: &str) {
        self.emit(Level::Debug, msg);
    }

    fn emit(&self, level: Level, msg: &str) {
        if level <= self.level {
            eprintln!("{msg}");
        }
        if let Some(path) = &self.log_file {
            let ts = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "[{ts}] {msg}");
            }
        }
    }
}
