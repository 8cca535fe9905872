use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

/// One trading day of OHLCV data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_close: Option<f64>,
}

/// Which closing price feeds indicator computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceField {
    #[default]
    Close,
    AdjustedClose,
}

impl Bar {
    pub fn price(&self, field: PriceField) -> f64 {
        match field {
            PriceField::Close => self.close,
            PriceField::AdjustedClose => self.adjusted_close.unwrap_or(self.close),
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be a positive number, got {v}"));
            }
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        if let Some(adj) = self.adjusted_close {
            if !(adj.is_finite() && adj > 0.0) {
                return Err(format!("adjusted_close must be positive, got {adj}"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        if self.open < self.low || self.open > self.high {
            return Err(format!(
                "open {} outside [{}, {}]",
                self.open, self.low, self.high
            ));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!(
                "close {} outside [{}, {}]",
                self.close, self.low, self.high
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct BarRow {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
    #[serde(default)]
    adjusted_close: Option<f64>,
}

pub fn load_bars(path: impl AsRef<Path>) -> Result<Vec<Bar>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_bars(&text)
}

/// Parses the bars CSV (`date,open,high,low,close,volume[,adjusted_close]`).
/// A header row is optional; rows come back sorted by date.
pub fn parse_bars(text: &str) -> Result<Vec<Bar>, DataError> {
    let has_header = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().to_ascii_lowercase().starts_with("date"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut bars = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(idx as u64 + 1, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && has_header {
            continue;
        }
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() < 6 || record.len() > 7 {
            return Err(DataError::Malformed {
                line,
                msg: format!("expected 6 or 7 fields, found {}", record.len()),
            });
        }
        let row: BarRow = record
            .deserialize(None)
            .map_err(|e| DataError::Malformed {
                line,
                msg: e.to_string(),
            })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            DataError::Malformed {
                line,
                msg: format!("bad date {:?}: {e}", row.date),
            }
        })?;
        let bar = Bar {
            date,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
            volume: row.volume,
            adjusted_close: row.adjusted_close,
        };
        bar.validate()
            .map_err(|msg| DataError::OhlcViolation { line, date, msg })?;
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(DataError::Empty);
    }
    bars.sort_by_key(|b| b.date);
    if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(DataError::DuplicateDate(w[0].date));
    }
    Ok(bars)
}

/// Dates of bars inside `[start, end]`, ascending. `bars` must be sorted.
pub fn trading_days(bars: &[Bar], start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    bars.iter()
        .map(|b| b.date)
        .filter(|d| *d >= start && *d <= end)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn single_row() {
        let bars = parse_bars("date,open,high,low,close,volume\n2023-06-01,180.0,182.0,179.0,181.0,1000000\n")
            .unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(bars[0].close, 181.0);
        assert_eq!(bars[0].date, d("2023-06-01"));
        assert_eq!(bars[0].adjusted_close, None);
    }

    #[test]
    fn sorts_ascending() {
        let text = "date,open,high,low,close,volume\n\
                    2023-06-02,1,2,1,2,10\n\
                    2023-06-01,1,2,1,1.5,10\n";
        let bars = parse_bars(text).unwrap();
        assert_eq!(bars[0].date, d("2023-06-01"));
        assert_eq!(bars[1].date, d("2023-06-02"));
    }

    #[test]
    fn low_above_high_is_rejected_with_line() {
        let text = "date,open,high,low,close,volume\n\
                    2023-06-01,180,182,179,181,1\n\
                    2023-06-02,181.0,182.0,185.0,181.0,1000\n";
        match parse_bars(text) {
            Err(DataError::OhlcViolation { line, date, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(date, d("2023-06-02"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_and_empty() {
        let bad = "date,open,high,low,close,volume\n2023-06-01,abc,1,1,1,1\n";
        assert!(matches!(
            parse_bars(bad),
            Err(DataError::Malformed { line: 2, .. })
        ));
        let dup = "2023-06-01,1,1,1,1,1\n2023-06-01,1,1,1,1,1\n";
        assert!(matches!(parse_bars(dup), Err(DataError::DuplicateDate(_))));
        assert!(matches!(
            parse_bars("date,open,high,low,close,volume\n"),
            Err(DataError::Empty)
        ));
    }

    #[test]
    fn adjusted_close_column() {
        let bars =
            parse_bars("date,open,high,low,close,volume,adjusted_close\n2023-06-01,1,2,1,2,5,1.9\n")
                .unwrap();
        assert_eq!(bars[0].adjusted_close, Some(1.9));
        assert_eq!(bars[0].price(PriceField::AdjustedClose), 1.9);
        assert_eq!(bars[0].price(PriceField::Close), 2.0);
    }

    #[test]
    fn trading_day_ranges() {
        let text = "2023-06-01,1,1,1,1,1\n2023-06-02,1,1,1,1,1\n2023-06-05,1,1,1,1,1\n";
        let bars = parse_bars(text).unwrap();
        assert_eq!(
            trading_days(&bars, d("2023-06-02"), d("2023-06-02")),
            vec![d("2023-06-02")]
        );
        assert!(trading_days(&bars, d("2023-06-03"), d("2023-06-04")).is_empty());
        assert_eq!(trading_days(&bars, d("2023-01-01"), d("2023-12-31")).len(), 3);
    }

    #[test]
    fn second_half_2023_session_counts() {
        // NYSE closures Jun 1 - Dec 29 2023: Juneteenth, Independence Day,
        // Labor Day, Thanksgiving, Christmas.
        let holidays = ["2023-06-19", "2023-07-04", "2023-09-04", "2023-11-23", "2023-12-25"]
            .map(d);
        let mut text = String::new();
        let mut day = d("2023-06-01");
        while day <= d("2023-12-29") {
            use chrono::Datelike;
            let weekend = matches!(day.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun);
            if !weekend && !holidays.contains(&day) {
                text.push_str(&format!("{day},10,11,9,10,100\n"));
            }
            day = day.succ_opt().unwrap();
        }
        let bars = parse_bars(&text).unwrap();
        assert_eq!(trading_days(&bars, d("2023-06-01"), d("2023-12-29")).len(), 147);

        // A vendor file missing two sessions gives the 145-day test window.
        let thinned: Vec<Bar> = bars
            .iter()
            .filter(|b| b.date != d("2023-07-03") && b.date != d("2023-11-24"))
            .copied()
            .collect();
        assert_eq!(trading_days(&thinned, d("2023-06-01"), d("2023-12-29")).len(), 145);
    }
}
