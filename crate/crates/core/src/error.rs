use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("series for {0} has no usable rows")]
    EmptySeries(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need {needed}, have {available} ({context})")]
    InsufficientData {
        needed: usize,
        available: usize,
        context: &'static str,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined slope at index {0}")]
    UndefinedSlope(usize),

    #[error("estimation did not converge after {iterations} iterations")]
    Convergence {
        iterations: usize,
        best: Box<crate::arima::ArimaModel>,
    },

    #[error("ill-conditioned normal equations: {0}")]
    Conditioning(String),

    #[error("order selection failed for every grid cell: {}", format_cells(.0))]
    Selection(Vec<(crate::arima::ArimaOrder, String)>),

    #[error("covariance is not positive semi-definite (quadratic form {0:e})")]
    NotPsd(f64),

    #[error("frontier is degenerate: every sample has zero risk")]
    DegenerateFrontier,

    #[error("indicators sum to zero; falling back to delta1 = {fallback}")]
    DegenerateIndicators { fallback: f64 },

    #[error("{date}: {source}")]
    Dated {
        date: chrono::NaiveDate,
        #[source]
        source: Box<Error>,
    },

    #[error("backtest aborted after {} records: {source}", .partial.len())]
    Aborted {
        partial: Box<Vec<crate::backtest::DailyRecord>>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(crate::arima::ArimaOrder, String)]) -> String {
    cells
        .iter()
        .map(|(order, why)| format!("{order}: {why}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn insufficient(needed: usize, available: usize, context: &'static str) -> Self {
        Error::InsufficientData {
            needed,
            available,
            context,
        }
    }

    /// True for errors caused by bad input data rather than misuse of the API.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Ingest { .. }
            | Error::EmptySeries(_)
            | Error::Alignment(_)
            | Error::InsufficientData { .. }
            | Error::Csv(_) => true,
            Error::Dated { source, .. } | Error::Aborted { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
