//! Error type shared by every module in the crate.

use std::fmt;
use std::io;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
///
/// Each variant corresponds to a contract violation or environmental
/// failure named by the operation that raises it; none of them are
/// recoverable by retrying with the same arguments.
#[derive(Debug)]
pub enum Error {
    /// A generator was asked for zero samples.
    EmptyRequest,
    /// A frequency band extends past the Nyquist frequency.
    SpectralBounds { f_hz: f64, nyquist_hz: f64 },
    /// A tone frequency would alias (f >= fs/2).
    Aliasing { f_hz: f64, nyquist_hz: f64 },
    /// Dual-tone generation with f1 == f2.
    DegenerateTone { f_hz: f64 },
    /// Argument outside the mathematical domain of the operation.
    Domain(String),
    /// A device specification violates its invariants.
    InvalidDutSpec(String),
    /// Cross-correlation of an all-zero signal has no peak.
    UndefinedCorrelation,
    /// Delay alignment would leave no overlapping samples.
    EmptyOverlap { lag: i64, len: usize },
    /// Normalization over a constant channel (max == min).
    DegenerateRange { channel: &'static str, value: f64 },
    /// A capture is too short for the requested windowing.
    InsufficientLength { needed: usize, got: usize },
    /// Batch normalization in train mode needs at least two rows.
    DegenerateBatch { batch: usize },
    /// Two sequences that must have equal length do not.
    LengthMismatch { left: usize, right: usize },
    /// Forward pass fed a window of the wrong width.
    WrongInputWidth { expected: usize, got: usize },
    /// Training produced a non-finite loss or gradient.
    Divergence { epoch: usize, detail: String },
    /// FFT length exceeds the waveform length.
    FftLength { n_fft: usize, len: usize },
    /// Peak search over a spectrum with no nonzero bin.
    AllZeroSpectrum,
    /// Requested tone frequency does not sit on an FFT bin.
    IncoherentTone { f_hz: f64, nearest_bin_hz: f64 },
    /// IM3 product indistinguishable from the numerical noise floor.
    UnreliableIm3 { im3_v: f64, floor_v: f64 },
    /// Malformed capture CSV or manifest.
    Parse { path: PathBuf, line: usize, msg: String },
    /// I/O failure, with the path that caused it.
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyRequest => write!(f, "requested zero samples"),
            Error::SpectralBounds { f_hz, nyquist_hz } => {
                write!(f, "band edge {f_hz} Hz exceeds Nyquist {nyquist_hz} Hz")
            }
            Error::Aliasing { f_hz, nyquist_hz } => {
                write!(f, "tone at {f_hz} Hz aliases (Nyquist {nyquist_hz} Hz)")
            }
            Error::DegenerateTone { f_hz } => {
                write!(f, "dual tone with both frequencies equal to {f_hz} Hz")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidDutSpec(msg) => write!(f, "invalid DUT spec: {msg}"),
            Error::UndefinedCorrelation => {
                write!(f, "cross-correlation undefined for all-zero input")
            }
            Error::EmptyOverlap { lag, len } => {
                write!(f, "lag {lag} leaves no overlap in length-{len} capture")
            }
            Error::DegenerateRange { channel, value } => {
                write!(f, "{channel} channel is constant at {value}; range undefined")
            }
            Error::InsufficientLength { needed, got } => {
                write!(f, "capture too short: need {needed} samples, have {got}")
            }
            Error::DegenerateBatch { batch } => {
                write!(f, "batch of {batch} cannot supply batch statistics")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::WrongInputWidth { expected, got } => {
                write!(f, "input width {got}, model expects {expected}")
            }
            Error::Divergence { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
            Error::FftLength { n_fft, len } => {
                write!(f, "n_fft {n_fft} exceeds waveform length {len}")
            }
            Error::AllZeroSpectrum => write!(f, "spectrum has no nonzero bin"),
            Error::IncoherentTone { f_hz, nearest_bin_hz } => {
                write!(f, "tone {f_hz} Hz is off-grid; nearest bin {nearest_bin_hz} Hz")
            }
            Error::UnreliableIm3 { im3_v, floor_v } => {
                write!(f, "IM3 amplitude {im3_v} V below noise floor {floor_v} V")
            }
            Error::Parse { path, line, msg } => {
                write!(f, "{}:{line}: {msg}", path.display())
            }
            Error::Io { path, source } => {
                write!(f, "{}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
