//! Error type shared by the model, calibration, and optimizer modules.

use thiserror::Error;

use crate::optimizer::ConstraintHistogram;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain invariant or operation precondition was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A malformed row in a measurement CSV. Ingestion aborts on the first
    /// bad row; nothing is skipped silently.
    #[error("{path}:{line}: malformed CSV row: {message}")]
    CsvParse {
        path: String,
        line: u64,
        message: String,
    },

    /// Too few usable samples for the requested fit.
    #[error("insufficient data for {context}: needed {needed}, got {got}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    /// The fit produced a degenerate or unphysical solution.
    #[error("fit diverged: {0}")]
    FitDivergence(String),

    /// Series passed to a multi-series fit disagree on drift gap, spacing
    /// ratio, or cross-section area.
    #[error("mismatched geometry across series: {0}")]
    MismatchedGeometry(String),

    /// A degradation series is not at constant voltage.
    #[error(
        "voltage not constant: max deviation {max_deviation_percent:.3}% of mean \
         exceeds the {limit_percent:.1}% limit"
    )]
    NonConstantVoltage {
        max_deviation_percent: f64,
        limit_percent: f64,
    },

    /// A degradation series does not span the requested window.
    #[error("series spans {spanned_s:.3} s, shorter than the {required_s:.3} s window")]
    InsufficientDuration { required_s: f64, spanned_s: f64 },

    /// Every grid point violated at least one constraint.
    #[error("no feasible design point; violations: {histogram}")]
    EmptyFeasibleSet { histogram: ConstraintHistogram },

    /// The requested design grid exceeds the evaluation cap.
    #[error("design grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    /// Selection was attempted on an empty Pareto set.
    #[error("empty Pareto set")]
    EmptyParetoSet,

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for this error, used in the CLI's
    /// error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::CsvParse { .. } => "csv_parse",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::FitDivergence(_) => "fit_divergence",
            Error::MismatchedGeometry(_) => "mismatched_geometry",
            Error::NonConstantVoltage { .. } => "non_constant_voltage",
            Error::InsufficientDuration { .. } => "insufficient_duration",
            Error::EmptyFeasibleSet { .. } => "empty_feasible_set",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::EmptyParetoSet => "empty_pareto_set",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
