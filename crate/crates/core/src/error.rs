use thiserror::Error;

/// Errors produced by the estimation and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied argument is outside its valid range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numeric input or an intermediate model evaluation is not finite.
    #[error("domain error: {0}")]
    Domain(String),

    /// The M-scale root finder hit its iteration cap.
    #[error("M-scale did not converge after {iterations} iterations; bracket [{lo}, {hi}]")]
    ScaleConvergence { iterations: usize, lo: f64, hi: f64 },

    /// IRWLS hit its iteration cap; carries the last iterate (beta..., alpha).
    #[error("{stage} iteration did not converge after {iterations} iterations")]
    IterationCap {
        stage: &'static str,
        iterations: usize,
        last: Vec<f64>,
    },

    /// No usable starting candidate could be formed.
    #[error("fit failed: {0}")]
    Fit(String),

    /// A matrix that must be inverted is (numerically) singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// One of a00, a01, d0 vanishes, so the influence function is undefined.
    #[error("degenerate inference constant: {0}")]
    DegenerateConstants(String),

    /// Invalid configuration; `key` names the offending field.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(t: f64, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} is not finite ({t})")))
    }
}
