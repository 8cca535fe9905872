use super::*;
use crate::gateway::{ChatRequest, ChatResponse, GatewayError};
use crate::market_data::NewsItem;

/// Answers the decision prompt with a fixed reply and everything else
/// with a short note.
struct FixedDecision(&'static str);

impl ChatBackend for FixedDecision {
    fn id(&self) -> String {
        "fixed".into()
    }

    fn complete(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, GatewayError> {
        let prompt = req.prompt_text();
        let text = if prompt.contains("Recommendation: [BUY/SELL/HOLD]") {
            self.0.to_string()
        } else {
            "noted".to_string()
        };
        Ok(ChatResponse {
            text,
            prompt_tokens: 0,
            completion_tokens: 0,
            backend_id: self.id(),
        })
    }
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = start;
    while out.len() < n {
        use chrono::Datelike;
        if d.weekday().number_from_monday() <= 5 {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

fn rising(dates: &[NaiveDate]) -> Vec<Bar> {
    dates
        .iter()
        .enumerate()
        .map(|(i, &date)| {
            let open = 100.0 + i as f64;
            Bar {
                date,
                open,
                high: open + 1.5,
                low: open - 0.5,
                close: open + 1.0,
                volume: 1_000.0,
                adjusted_close: None,
            }
        })
        .collect()
}

fn config(warmup: Option<(NaiveDate, NaiveDate)>, test: (NaiveDate, NaiveDate)) -> RunConfig {
    let mut c = RunConfig::from_json(
        r#"{"ticker":"TEST","bars_path":"bars.csv","test":{"start":"2023-06-01","end":"2023-06-01"}}"#,
    )
    .unwrap();
    c.warmup = warmup.map(|(start, end)| Window { start, end });
    c.test = Window {
        start: test.0,
        end: test.1,
    };
    c.charts.technical_width = 240;
    c.charts.technical_height = 180;
    c.charts.signal_width = 200;
    c.charts.signal_height = 100;
    c
}

fn data(bars: Vec<Bar>) -> MarketData {
    MarketData {
        bars,
        news: NewsStore::default(),
    }
}

#[test]
fn buy_ten_percent_on_rising_series() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 70);
    let bars = rising(&dates);
    let cfg = config(None, (dates[65], dates[65]));
    let backend = FixedDecision("Recommendation: BUY\nPosition Size: 10\nExplanation: up.");
    let agents = Agents::new(&backend, &cfg.agents);
    let d = data(bars.clone());
    let day = day_context(&cfg, &d, 65, Phase::Test);
    let state = AgentState::new("TEST");
    let portfolio = Portfolio::new(10_000.0).unwrap();
    let out = step_day(&cfg, &state, &portfolio, &day, &agents).unwrap();

    let rec = out.record();
    let fill = rec.fill.as_ref().expect("one BUY fill");
    // 10% of 10,000 at the day's open.
    let open = bars[65].open;
    let close = bars[65].close;
    let shares = (1_000.0 / open * 1e8).floor() / 1e8;
    assert_eq!(fill.action, Action::Buy);
    assert!((fill.shares - shares).abs() < 1e-12);
    let expected_total = 10_000.0 - shares * open + shares * close;
    assert!((rec.snapshot.total_value - expected_total).abs() < 1e-9);
    assert!((rec.reward - (expected_total - 10_000.0)).abs() < 1e-9);
    assert!(rec.reward > 0.0);
    assert_eq!(out.state.decisions.len(), 1);
    assert!(state.decisions.is_empty());
}

#[test]
fn hold_forever_keeps_capital() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 80);
    let cfg = config(None, (dates[60], dates[79]));
    let backend = FixedDecision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
    let r = run_backtest(&cfg, &data(rising(&dates)), &backend, &RunOptions::default()).unwrap();
    assert_eq!(r.equity.len(), 20);
    assert!(r.equity.iter().all(|p| p.total_value == 10_000.0));
    assert!(r.decisions.iter().all(|d| d.reward == 0.0 && d.fill.is_none()));
    assert!(r.fills.is_empty());
}

#[test]
fn missing_news_uses_sentinel() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 64);
    let cfg = config(None, (dates[62], dates[63]));
    let mut d = data(rising(&dates));
    d.news = NewsStore::from_items(vec![serde_json::from_value::<NewsItem>(serde_json::json!({
        "ticker": "TEST",
        "published_at": dates[62].to_string(),
        "title": "Something happened",
        "body": "",
        "source": "wire"
    }))
    .unwrap()]);
    let backend = FixedDecision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
    let r = run_backtest(&cfg, &d, &backend, &RunOptions::default()).unwrap();
    // Day 62 sees news of day 61 (none); day 63 sees the item from day 62.
    assert_eq!(r.decisions.len(), 2);
    assert!(r
        .events
        .iter()
        .any(|e| e.date == dates[62] && e.detail == EventDetail::NoNews));
    assert!(!r
        .events
        .iter()
        .any(|e| e.date == dates[63] && e.detail == EventDetail::NoNews));
    let summarized: Vec<_> = r
        .run_log
        .iter()
        .filter(|e| e.role == AgentRole::Summarizer)
        .map(|e| e.date)
        .collect();
    assert_eq!(summarized, vec![dates[63]]);
}

#[test]
fn warmup_and_test_day_counts() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 60 + 42 + 145);
    let cfg = config(Some((dates[60], dates[101])), (dates[102], dates[246]));
    let backend = FixedDecision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
    let r = run_backtest(&cfg, &data(rising(&dates)), &backend, &RunOptions::default()).unwrap();
    assert_eq!(r.equity.len(), 145);
    assert_eq!(r.decisions.len(), 187);
    assert_eq!(r.metrics.as_ref().unwrap().n_days, 145);
    // Reflection on test day 1 already sees warmup decisions.
    let first_test = r.decisions.iter().position(|d| d.phase == Phase::Test).unwrap();
    assert_eq!(first_test, 42);
}

#[test]
fn zero_warmup_flags_partial_histories() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 70);
    let cfg = config(None, (dates[60], dates[69]));
    let backend = FixedDecision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
    let r = run_backtest(&cfg, &data(rising(&dates)), &backend, &RunOptions::default()).unwrap();
    let partial: Vec<_> = r
        .events
        .iter()
        .filter_map(|e| match &e.detail {
            EventDetail::PartialHistory {
                role: AgentRole::ReflectionPerformanceShort,
                available,
                ..
            } => Some(*available),
            _ => None,
        })
        .collect();
    assert_eq!(partial, vec![0, 1, 2, 3, 4, 5, 6]);
}

#[test]
fn day_one_visual_reflection_on_markerless_chart() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 70);
    let cfg = config(None, (dates[60], dates[61]));
    let backend = FixedDecision("Recommendation: BUY\nPosition Size: 5\nExplanation: go.");
    let d = data(rising(&dates));
    let agents = Agents::new(&backend, &cfg.agents);
    let state = AgentState::new("TEST");
    let p = Portfolio::new(10_000.0).unwrap();
    let day1 = step_day(&cfg, &state, &p, &day_context(&cfg, &d, 60, Phase::Test), &agents).unwrap();
    assert_eq!(day1.charts.signal.marker_count(), 0);
    assert!(day1.run_log.iter().any(|e| e.role == AgentRole::ReflectionVisual));
    let day2 = step_day(
        &cfg,
        &day1.state,
        &day1.portfolio,
        &day_context(&cfg, &d, 61, Phase::Test),
        &agents,
    )
    .unwrap();
    assert_eq!(day2.charts.signal.marker_count(), 1);
}

#[test]
fn first_bar_is_skipped() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 5);
    let cfg = config(None, (dates[0], dates[4]));
    let backend = FixedDecision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
    let r = run_backtest(&cfg, &data(rising(&dates)), &backend, &RunOptions::default()).unwrap();
    assert_eq!(r.decisions.len(), 4);
    assert!(matches!(r.events[0].detail, EventDetail::SkippedDay { .. }));
}

#[test]
fn malformed_decision_degrades_to_hold() {
    let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), 62);
    let cfg = config(None, (dates[61], dates[61]));
    let backend = FixedDecision("buy buy buy!!!");
    let r = run_backtest(&cfg, &data(rising(&dates)), &backend, &RunOptions::default()).unwrap();
    assert_eq!(r.decisions[0].decision.action, Action::Hold);
    assert!(r.events.iter().any(|e| e.detail
        == EventDetail::MalformedOutput {
            event: ParseEvent::NoRecommendation
        }));
}
