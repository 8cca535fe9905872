use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub ticker: String,
    /// Timestamp exactly as supplied.
    pub published_at: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub source: String,
    #[serde(skip)]
    date: Option<NaiveDate>,
}

impl NewsItem {
    /// Calendar date component of `published_at`, as written.
    pub fn date(&self) -> NaiveDate {
        self.date
            .or_else(|| parse_timestamp_date(&self.published_at))
            .expect("validated at load")
    }
}

#[derive(Deserialize)]
struct RawNews {
    ticker: String,
    published_at: String,
    title: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

fn parse_timestamp_date(ts: &str) -> Option<NaiveDate> {
    let ts = ts.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(ts) {
        return Some(dt.naive_local().date());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(ts, fmt) {
            return Some(dt.date());
        }
    }
    NaiveDate::parse_from_str(ts, "%Y-%m-%d").ok()
}

/// All news items of a file, in file order.
#[derive(Debug, Clone, Default)]
pub struct NewsStore {
    items: Vec<NewsItem>,
}

impl NewsStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            items: parse_news(&text)?,
        })
    }

    pub fn from_items(items: Vec<NewsItem>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn on<'a>(
        &'a self,
        ticker: &'a str,
        date: NaiveDate,
    ) -> impl Iterator<Item = &'a NewsItem> + 'a {
        self.between(ticker, date, date)
    }

    /// Items for `ticker` dated within `[from, to]`.
    pub fn between<'a>(
        &'a self,
        ticker: &'a str,
        from: NaiveDate,
        to: NaiveDate,
    ) -> impl Iterator<Item = &'a NewsItem> + 'a {
        self.items.iter().filter(move |n| {
            n.ticker.eq_ignore_ascii_case(ticker) && n.date() >= from && n.date() <= to
        })
    }
}

pub fn parse_news(text: &str) -> Result<Vec<NewsItem>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| DataError::Malformed { line: line_no, msg };
        let raw: RawNews = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let ticker = raw.ticker.trim().to_ascii_uppercase();
        if ticker.is_empty() {
            return Err(malformed("empty ticker".into()));
        }
        if raw.title.trim().is_empty() {
            return Err(malformed("empty title".into()));
        }
        let date = parse_timestamp_date(&raw.published_at)
            .ok_or_else(|| malformed(format!("bad published_at {:?}", raw.published_at)))?;
        out.push(NewsItem {
            ticker,
            published_at: raw.published_at,
            title: raw.title,
            body: raw.body.unwrap_or_default(),
            source: raw.source.unwrap_or_default(),
            date: Some(date),
        });
    }
    Ok(out)
}

/// News for `ticker` published on `date`, in file order.
pub fn load_news(
    path: impl AsRef<Path>,
    ticker: &str,
    date: NaiveDate,
) -> Result<Vec<NewsItem>, DataError> {
    let store = NewsStore::load(path)?;
    Ok(store.on(ticker, date).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn line(ticker: &str, ts: &str, title: &str) -> String {
        serde_json::json!({
            "ticker": ticker, "published_at": ts, "title": title,
            "body": "b", "source": "s", "extra": 1
        })
        .to_string()
    }

    #[test]
    fn filters_by_ticker_and_date_in_order() {
        let text = [
            line("AAPL", "2023-06-01T09:00:00Z", "a1"),
            line("MSFT", "2023-06-01T09:00:00Z", "m1"),
            line("aapl", "2023-06-01 13:00:00", "a2"),
            line("AAPL", "2023-06-02T09:00:00-04:00", "b1"),
            line("AAPL", "2023-06-01", "a3"),
            line("AAPL", "2023-06-02T10:00:00", "b2"),
        ]
        .join("\n");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();

        let got = load_news(f.path(), "AAPL", d("2023-06-01")).unwrap();
        let titles: Vec<_> = got.iter().map(|n| n.title.as_str()).collect();
        assert_eq!(titles, ["a1", "a2", "a3"]);
        assert_eq!(got[1].ticker, "AAPL");
        assert_eq!(load_news(f.path(), "AAPL", d("2023-06-02")).unwrap().len(), 2);
        assert!(load_news(f.path(), "AAPL", d("2023-06-03")).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = format!("{}\n{{not json\n", line("AAPL", "2023-06-01", "t"));
        assert!(matches!(
            parse_news(&text),
            Err(DataError::Malformed { line: 2, .. })
        ));
        let empty_title = line("AAPL", "2023-06-01", " ");
        assert!(matches!(
            parse_news(&empty_title),
            Err(DataError::Malformed { line: 1, .. })
        ));
        let bad_ts = line("AAPL", "June 1st", "t");
        assert!(parse_news(&bad_ts).is_err());
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(
            load_news("/nonexistent/news.jsonl", "AAPL", d("2023-06-01")),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn corpus_of_testing_window_size_loads() {
        // 4,886 items spread over 145 days.
        let start = d("2023-06-01");
        let mut text = String::new();
        for i in 0..4886u32 {
            let day = start + chrono::Days::new(u64::from(i % 145));
            text.push_str(&line("AAPL", &format!("{day}T12:00:00Z"), &format!("n{i}")));
            text.push('\n');
        }
        let store = NewsStore::from_items(parse_news(&text).unwrap());
        assert_eq!(store.len(), 4886);
        let total: usize = (0..145u64)
            .map(|k| store.on("AAPL", start + chrono::Days::new(k)).count())
            .sum();
        assert_eq!(total, 4886);
    }
}
