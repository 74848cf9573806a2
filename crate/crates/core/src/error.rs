//! Crate-wide error type.
//!
//! All fallible operations return [`Result`]. Variants are grouped by the
//! stage that produces them so callers (in particular the CLI) can map them
//! to stable exit codes without string matching.

/// Errors produced by the statistical core, the simulation engine and the
/// ML stacking layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed user input: impossible parameters, empty samples,
    /// negative times, out-of-range probabilities and the like.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Textual parse failure (distribution grammar, CSV rows, config files).
    /// `line` is 1-based; 0 means the location is not line-oriented.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A numeric routine failed to converge or left its domain
    /// (quadrature, root finding, quantile inversion, matrix solve).
    #[error("numeric failure in {0}")]
    Numeric(String),

    /// A test statistic is undefined on the given data, e.g. a zero
    /// variance estimate or an all-censored sample.
    #[error("degenerate statistic for {method}: {reason}")]
    Degenerate { method: String, reason: String },

    /// Censoring calibration could not bracket or reach the target rate.
    #[error("censoring calibration failed: {0}")]
    Calibration(String),

    /// A p-value was requested for an empirically calibrated statistic
    /// without supplying the matching null table.
    #[error("null table required: {0}")]
    TableRequired(String),

    /// A null table failed its quality gate (too few replications or too
    /// many degenerate draws).
    #[error("null table rejected: {0}")]
    TableQuality(String),

    /// A serialized model does not match the feature set or schema the
    /// running binary expects.
    #[error("incompatible model: {0}")]
    IncompatibleModel(String),

    /// Classifier training failed (degenerate targets, no usable split,
    /// diverging optimizer).
    #[error("training failed: {0}")]
    Training(String),

    /// A metric is undefined on the given predictions (e.g. ROC AUC with a
    /// single-class target).
    #[error("metric undefined: {0}")]
    Metric(String),

    /// An analysis input is missing required cells or columns.
    #[error("incomplete input: {0}")]
    Incomplete(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category used in logs and CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Parse { .. } => "parse",
            Error::Numeric(_) => "numeric",
            Error::Degenerate { .. } => "degenerate",
            Error::Calibration(_) => "calibration",
            Error::TableRequired(_) => "table-required",
            Error::TableQuality(_) => "table-quality",
            Error::IncompatibleModel(_) => "incompatible-model",
            Error::Training(_) => "training",
            Error::Metric(_) => "metric",
            Error::Incomplete(_) => "incomplete",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(method: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Degenerate { method: method.into(), reason: reason.into() }
    }
}
