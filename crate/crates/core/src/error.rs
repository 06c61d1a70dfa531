//! Crate-wide error type.
//!
//! Errors fall into three coarse categories that front-ends (notably the CLI)
//! map onto exit codes: configuration errors (bad parameters or config files),
//! data errors (unreadable, truncated, or inconsistent inputs), and numeric
//! failures (singular or divergent computations).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    // -- configuration ------------------------------------------------------
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "Nyquist violation: design frequency {frequency_hz} Hz exceeds half the \
         presentation rate {frame_rate_hz} Hz"
    )]
    NyquistViolation { frequency_hz: f64, frame_rate_hz: f64 },

    #[error("band [{lo} Hz, {hi} Hz] is outside the spectrum coverage [{min} Hz, {max} Hz]")]
    BandOutOfRange { lo: f64, hi: f64, min: f64, max: f64 },

    #[error("window of {window_samples} samples exceeds available {available_samples} samples")]
    WindowTooLong { window_samples: usize, available_samples: usize },

    #[error("requested subset of {requested} exceeds pool of {available}")]
    SubsetTooLarge { requested: usize, available: usize },

    // -- data ---------------------------------------------------------------
    #[error("sample rate mismatch: {left_hz} Hz vs {right_hz} Hz")]
    RateMismatch { left_hz: f64, right_hz: f64 },

    #[error("{scope} has {found} but at least {needed} are required")]
    TooFewTrials { scope: String, found: usize, needed: usize },

    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { found: usize, needed: usize },

    #[error("class {class_id} is degenerate: {reason}")]
    DegenerateClass { class_id: u32, reason: String },

    #[error("template for class {class_id} has zero variance in the scored window")]
    DegenerateTemplate { class_id: u32 },

    #[error("label {class_id} does not appear in the code set / model")]
    UnknownClass { class_id: u32 },

    #[error("bad magic at byte offset {offset}: expected {expected:?}, found {found:?}")]
    BadMagic { offset: u64, expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} at byte offset {offset} (supported: {supported})")]
    VersionUnsupported { offset: u64, found: u32, supported: u32 },

    #[error(
        "truncated payload at byte offset {offset}: expected {expected_bytes} more bytes, \
         found {found_bytes}"
    )]
    TruncatedPayload { offset: u64, expected_bytes: u64, found_bytes: u64 },

    #[error("{extra_bytes} unexpected trailing bytes after byte offset {offset}")]
    TrailingBytes { offset: u64, extra_bytes: u64 },

    #[error("malformed table in {path} at line {line}: {reason}")]
    MalformedTable { path: String, line: usize, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    // -- numeric ------------------------------------------------------------
    #[error("singular system: condition estimate {cond_estimate:.3e} exceeds {limit:.3e}")]
    SingularSystem { cond_estimate: f64, limit: f64 },

    #[error(
        "divergent inverse: |H(f)| = {magnitude:.3e} at {frequency_hz} Hz with zero \
         regularization"
    )]
    DivergentInverse { frequency_hz: f64, magnitude: f64 },

    #[error("eigensolver failure: {0}")]
    EigSolverFailure(String),

    // -- composite ----------------------------------------------------------
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidParam(_) | InvalidConfig(_) | NyquistViolation { .. }
            | BandOutOfRange { .. } | WindowTooLong { .. } | SubsetTooLarge { .. } => {
                ErrorCategory::Config
            }
            RateMismatch { .. } | TooFewTrials { .. } | TooFewRows { .. }
            | DegenerateClass { .. } | DegenerateTemplate { .. } | UnknownClass { .. }
            | BadMagic { .. } | VersionUnsupported { .. } | TruncatedPayload { .. }
            | TrailingBytes { .. } | MalformedTable { .. } | Io { .. } | Json { .. } => {
                ErrorCategory::Data
            }
            SingularSystem { .. } | DivergentInverse { .. } | EigSolverFailure(_) => {
                ErrorCategory::Numeric
            }
            Stage { source, .. } => source.category(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Error {
        Error::Json { context: context.into(), source }
    }
}
