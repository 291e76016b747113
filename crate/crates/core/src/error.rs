//! Error type shared across the crate.

use chrono::NaiveDate;
use thiserror::Error;

/// Errors produced by ingestion, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its mathematical domain.
    #[error("invalid parameters: {0}")]
    Params(String),

    /// A row of an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Two rows describe the same (date, district) cell.
    #[error("duplicate entry for date {date}, district {district}")]
    Duplicate { date: NaiveDate, district: String },

    /// The input skips a calendar day and zero-filling was not requested.
    #[error("missing date {0} in input (enable fill_missing to pad with zeros)")]
    DateGap(NaiveDate),

    /// A requested date (or its required lags) falls outside the panel.
    #[error("date {0} outside the usable panel range")]
    DateRange(NaiveDate),

    /// Too few usable observations for the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A sample variance does not exceed its mean, so no Negative Binomial
    /// moment fit exists.
    #[error("underdispersed sample: variance {variance} <= mean {mean}")]
    Underdispersed { mean: f64, variance: f64 },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
