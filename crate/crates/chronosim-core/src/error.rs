//! Error taxonomy shared by every module in the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes the simulator reports.
///
/// Numerical health problems that do not make a result meaningless (trace
/// drift, small negative eigenvalues after truncated expansions) are *not*
/// errors; they are reported through evolution diagnostics instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A state construction collapsed to (numerically) zero norm.
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    /// A grid or quadrature cannot resolve the requested state or operator.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// A clock spectrum has no common gap unit, or a time observable on it
    /// would alias.
    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(String),

    /// Operator powers above the supported cap, or an unsupported
    /// method/state pairing.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Matrix dimensions do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input lies outside the mathematical domain of an expression
    /// (e.g. a square root of a negative classical energy).
    #[error("domain error: {0}")]
    Domain(String),

    /// An operator fails a structural requirement (typically hermiticity).
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// A rate fit terminated without bracketing a minimum.
    #[error("rate fit failed: best s = {best_s}, residual = {residual}: {message}")]
    Fit {
        best_s: f64,
        residual: f64,
        message: String,
    },

    /// A configuration field failed validation; `field` is the dotted path.
    #[error("config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("config parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: msg.into(),
        }
    }
}
