use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps these onto exit codes, so the split between variants is
/// driven by what callers need to distinguish: data problems
/// (format/length/validation), configuration problems, empty-input domain
/// errors, shape mismatches and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents: bad magic, bad version, unknown flags,
    /// inconsistent record sizes.
    #[error("format: {0}")]
    Format(String),

    /// Payload length disagrees with a declared or implied count.
    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    /// Data that parses but violates an invariant (NaN coordinates, label
    /// vector of the wrong length, degenerate polygon).
    #[error("validation: {0}")]
    Validation(String),

    /// A configuration value or combination that cannot be honored.
    #[error("configuration: {0}")]
    Config(String),

    /// An operation whose domain excludes empty inputs was given one.
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Too few points for the requested model geometry.
    #[error("input too small: need at least {needed} points, got {got}")]
    InputTooSmall { needed: usize, got: usize },

    /// Tensor shapes disagree between a checkpoint, a config and the code.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
