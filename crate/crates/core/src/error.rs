use thiserror::Error;

/// Errors raised by the kernels, the tape, and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss node, got shape {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("adjoints already populated; call zero_grad before another backward pass")]
    AdjointsNotZeroed,

    #[error("reflection coefficient {value} at position {index} is outside (-1, 1)")]
    ReflectionOutOfRange { index: usize, value: f64 },

    #[error("frame plan is not constant-overlap-add: relative deviation {deviation:.3e}")]
    NotCola { deviation: f64 },

    #[error("LF balance solver did not converge for Rd = {rd}")]
    SolverDiverged { rd: f64 },

    #[error("f0 {f0} Hz is at or above the Nyquist frequency of {nyquist} Hz")]
    F0AboveNyquist { f0: f64, nyquist: f64 },

    #[error("malformed {file}: key `{key}`: {detail}")]
    Format {
        file: &'static str,
        key: String,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn format(file: &'static str, key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            file,
            key: key.into(),
            detail: detail.into(),
        }
    }
}

pub(crate) fn ensure_finite<T: num_traits::Float>(what: &'static str, xs: &[T]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
