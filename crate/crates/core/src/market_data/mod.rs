//! Market bars, news items and the technical indicators derived from them.

mod bars;
mod indicators;
mod news;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub use bars::{load_bars, parse_bars, trading_days, Bar, PriceField};
pub use indicators::{compute_indicators, IndicatorFrame, IndicatorParams, Series};
pub use news::{load_news, parse_news, NewsItem, NewsStore};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: OHLC violation on {date}: {msg}")]
    OhlcViolation {
        line: u64,
        date: NaiveDate,
        msg: String,
    },
    #[error("duplicate bar date {0}")]
    DuplicateDate(NaiveDate),
    #[error("no bars in input")]
    Empty,
    #[error("invalid input: {0}")]
    Invalid(String),
}
