use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentRole, ParseEvent, TradingDecision};
use crate::portfolio::{Fill, Money, PortfolioSnapshot, RuleEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dated<T> {
    pub date: NaiveDate,
    pub value: T,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionInsights {
    pub short_term: String,
    pub medium_term: String,
}

/// Everything decided and observed on one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub date: NaiveDate,
    pub phase: Phase,
    pub decision: TradingDecision,
    pub fill: Option<Fill>,
    /// Portfolio at day-t close, after execution.
    pub snapshot: PortfolioSnapshot,
    /// Exact change in total value since the previous close.
    pub reward_exact: Money,
    /// Reward in the configured unit (currency or percent).
    pub reward: f64,
    pub technical_chart_sha256: String,
    pub signal_chart_sha256: String,
}

/// Per-day evolving record of agent outputs and decisions. Histories are
/// append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub ticker: String,
    pub date: Option<NaiveDate>,
    pub news_summary: Vec<Dated<String>>,
    pub chart_analysis: Vec<Dated<String>>,
    pub reflection_insights: ReflectionInsights,
    pub market_intelligence: String,
    /// Snapshot at the close of the last processed day.
    pub portfolio_snapshot: Option<PortfolioSnapshot>,
    pub decisions: Vec<DecisionRecord>,
}

impl AgentState {
    pub fn new(ticker: &str) -> Self {
        Self {
            ticker: ticker.to_string(),
            date: None,
            news_summary: Vec::new(),
            chart_analysis: Vec::new(),
            reflection_insights: ReflectionInsights::default(),
            market_intelligence: String::new(),
            portfolio_snapshot: None,
            decisions: Vec::new(),
        }
    }

    /// The last `n` decision records (fewer early in a run).
    pub fn recent(&self, n: usize) -> &[DecisionRecord] {
        &self.decisions[self.decisions.len().saturating_sub(n)..]
    }
}

/// Something worth noting that did not stop the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub date: NaiveDate,
    #[serde(flatten)]
    pub detail: EventDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventDetail {
    /// Decision output needed repair; see `event`.
    MalformedOutput { event: ParseEvent },
    /// Decision agent asked again after unparsable output.
    DecisionRetried,
    Rule { event: RuleEvent },
    /// No news for the summarizer; the sentinel text was used.
    NoNews,
    /// Reflection history shorter than its window.
    PartialHistory { role: AgentRole, window: usize, available: usize },
    /// Chart built from fewer bars than its window.
    TruncatedChart { chart: String, bars: usize, window: usize },
    /// Day skipped because no earlier bar exists.
    SkippedDay { reason: String },
    /// Portfolio returned to initial capital at the start of testing.
    PortfolioReset,
    /// Metrics could not be computed for the test curve.
    MetricsUnavailable { reason: String },
}
