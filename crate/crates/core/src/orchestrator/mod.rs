//! The daily agent graph and the backtest loop around it.

mod config;
mod graph;
mod state;

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agents::{
    parse_decision, Action, AgentRole, Agents, ParseEvent, PromptContext, RunLogEntry,
    TradingDecision,
};
use crate::analytics::{EquityCurve, MetricsReport};
use crate::charting::{build_signal_chart, build_technical_chart, render_png, ChartSpec};
use crate::error::{Error, Result};
use crate::gateway::{sha256_hex, ChatBackend};
use crate::market_data::{compute_indicators, load_bars, Bar, DataError, NewsItem, NewsStore};
use crate::portfolio::{daily_reward, Fill, Portfolio, PortfolioSnapshot};

pub use config::{ReflectionWindows, RewardMode, RunConfig, Window};
pub use graph::{validate_graph, AgentGraph, CycleError, ExecutionPlan, Node};
pub use state::{
    AgentState, Dated, DecisionRecord, EventDetail, Phase, ReflectionInsights, RunEvent,
};

/// Summary text used when no news exists for the day.
pub const NO_NEWS: &str = "No relevant news.";

pub const CHECKPOINT_VERSION: u32 = 1;

/// Bars and news for one ticker.
#[derive(Debug, Clone)]
pub struct MarketData {
    pub bars: Vec<Bar>,
    pub news: NewsStore,
}

impl MarketData {
    /// Loads the files named by `cfg`, whose paths must already be usable
    /// from the working directory.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let bars = load_bars(&cfg.bars_path)?;
        let news = match &cfg.news_path {
            Some(p) => NewsStore::load(p)?,
            None => NewsStore::default(),
        };
        Ok(Self { bars, news })
    }
}

/// Data visible when deciding for `date`: bars strictly before it, news
/// up to the previous trading day, and the prices of `date` used only
/// for execution and marking.
#[derive(Debug, Clone)]
pub struct DayContext<'a> {
    pub date: NaiveDate,
    pub phase: Phase,
    pub history: &'a [Bar],
    pub news: Vec<&'a NewsItem>,
    pub open: f64,
    pub close: f64,
}

#[derive(Debug, Clone)]
pub struct DayCharts {
    pub technical: ChartSpec,
    pub signal: ChartSpec,
    pub technical_png: Vec<u8>,
    pub signal_png: Vec<u8>,
}

/// The two chart images the agents see when deciding for the day after
/// `history`. `decisions` may extend before the signal window.
pub fn build_day_charts(
    cfg: &RunConfig,
    history: &[Bar],
    decisions: &[(NaiveDate, Action)],
) -> Result<DayCharts> {
    let frame = compute_indicators(history, &cfg.indicators)?;
    let technical = build_technical_chart(&cfg.ticker, history, &frame, &cfg.charts)?;
    let first_shown = history[history.len().saturating_sub(cfg.charts.signal_window)].date;
    let last_shown = history[history.len() - 1].date;
    let shown: Vec<(NaiveDate, Action)> = decisions
        .iter()
        .copied()
        .filter(|(d, _)| *d >= first_shown && *d <= last_shown)
        .collect();
    let signal = build_signal_chart(&cfg.ticker, history, &shown, &cfg.charts)?;
    Ok(DayCharts {
        technical_png: render_png(&technical)?,
        signal_png: render_png(&signal)?,
        technical,
        signal,
    })
}

/// Everything produced by one processed day, ready to append to state.
#[derive(Debug, Clone)]
pub struct DayOutcome {
    pub state: AgentState,
    pub portfolio: Portfolio,
    pub events: Vec<RunEvent>,
    pub run_log: Vec<RunLogEntry>,
    pub charts: DayCharts,
}

impl DayOutcome {
    pub fn record(&self) -> &DecisionRecord {
        self.state.decisions.last().expect("a processed day records a decision")
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    let r = (v * k).round() / k;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub(crate) fn round2(v: f64) -> f64 {
    round_to(v, 2)
}

#[derive(Serialize)]
struct HistoryRow<'a> {
    date: NaiveDate,
    recommendation: Action,
    position_size: u8,
    executed_pct: f64,
    close: f64,
    total_value: f64,
    reward: f64,
    cumulative_return_pct: f64,
    explanation: &'a str,
}

fn history_json(records: &[DecisionRecord], capital: f64) -> String {
    let rows: Vec<HistoryRow> = records
        .iter()
        .map(|r| HistoryRow {
            date: r.date,
            recommendation: r.decision.action,
            position_size: r.decision.position_size,
            executed_pct: round2(r.fill.as_ref().map_or(0.0, |f| f.executed_pct)),
            close: round2(r.snapshot.share_price),
            total_value: round2(r.snapshot.total_value),
            reward: round_to(r.reward, 4),
            cumulative_return_pct: round2((r.snapshot.total_value / capital - 1.0) * 100.0),
            explanation: &r.decision.explanation,
        })
        .collect();
    serde_json::to_string(&rows).expect("history rows serialize")
}

fn news_text(items: &[&NewsItem]) -> String {
    items
        .iter()
        .map(|n| {
            let mut line = format!("- [{}] {}", n.published_at, n.title);
            if !n.body.trim().is_empty() {
                line.push_str(": ");
                line.push_str(n.body.trim());
            }
            if !n.source.trim().is_empty() {
                line.push_str(&format!(" ({})", n.source.trim()));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Job {
    role: AgentRole,
    ctx: PromptContext,
    images: Vec<Vec<u8>>,
}

fn run_jobs(agents: &Agents, date: NaiveDate, jobs: &[Job]) -> Vec<Result<(String, RunLogEntry)>> {
    let call = |j: &Job| agents.invoke(j.role, date, &j.ctx, &j.images);
    if agents.backend().order_sensitive() {
        return jobs.iter().map(call).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|j| s.spawn(move || call(j))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("agent thread panicked"))
            .collect()
    })
}

fn event(date: NaiveDate, detail: EventDetail) -> RunEvent {
    RunEvent { date, detail }
}

/// Runs the agent graph for one day and executes its decision.
///
/// Neither `state` nor `portfolio` is modified; on error nothing of the
/// day is kept.
pub fn step_day(
    cfg: &RunConfig,
    state: &AgentState,
    portfolio: &Portfolio,
    day: &DayContext,
    agents: &Agents,
) -> Result<DayOutcome> {
    let date = day.date;
    let prev_bar = day
        .history
        .last()
        .ok_or_else(|| Error::Data(DataError::Invalid(format!("no bar before {date}"))))?;
    let mut events = Vec::new();

    let marked: Vec<(NaiveDate, Action)> =
        state.decisions.iter().map(|r| (r.date, r.decision.action)).collect();
    let charts = build_day_charts(cfg, day.history, &marked)?;
    for (name, spec, window) in [
        ("technical", &charts.technical, cfg.charts.technical_window),
        ("signal", &charts.signal, cfg.charts.signal_window),
    ] {
        if spec.truncated {
            events.push(event(
                date,
                EventDetail::TruncatedChart {
                    chart: name.into(),
                    bars: spec.panels[0].dates.len(),
                    window,
                },
            ));
        }
    }

    let ticker = cfg.ticker.as_str();
    let capital = portfolio.initial_capital().to_f64();
    let mut jobs = Vec::new();
    if day.news.is_empty() {
        events.push(event(date, EventDetail::NoNews));
    } else {
        jobs.push(Job {
            role: AgentRole::Summarizer,
            ctx: PromptContext::new()
                .with("ticker", ticker)
                .with("news_data", news_text(&day.news)),
            images: Vec::new(),
        });
    }
    jobs.push(Job {
        role: AgentRole::TechnicalAnalyst,
        ctx: PromptContext::new().with("ticker", ticker),
        images: vec![charts.technical_png.clone()],
    });
    for (role, window) in [
        (AgentRole::ReflectionPerformanceShort, cfg.windows.short),
        (AgentRole::ReflectionPerformanceMedium, cfg.windows.medium),
    ] {
        let recent = state.recent(window);
        if recent.len() < window {
            events.push(event(
                date,
                EventDetail::PartialHistory {
                    role,
                    window,
                    available: recent.len(),
                },
            ));
        }
        jobs.push(Job {
            role,
            ctx: PromptContext::new()
                .with("ticker", ticker)
                .with("len_term_data", recent.len())
                .with("json_data", history_json(recent, capital)),
            images: Vec::new(),
        });
    }
    jobs.push(Job {
        role: AgentRole::ReflectionVisual,
        ctx: PromptContext::new().with("ticker", ticker),
        images: vec![charts.signal_png.clone()],
    });

    let mut run_log = Vec::new();
    let mut outputs = std::collections::BTreeMap::new();
    for (job, result) in jobs.iter().zip(run_jobs(agents, date, &jobs)) {
        let (text, entry) = result?;
        run_log.push(entry);
        outputs.insert(job.role, text);
    }
    let mut take = |role| outputs.remove(&role).unwrap_or_default();
    let news_summary = if day.news.is_empty() {
        NO_NEWS.to_string()
    } else {
        take(AgentRole::Summarizer)
    };
    let chart_analysis = take(AgentRole::TechnicalAnalyst);
    let reflections = ReflectionInsights {
        short_term: take(AgentRole::ReflectionPerformanceShort),
        medium_term: take(AgentRole::ReflectionPerformanceMedium),
    };
    let market_intelligence = take(AgentRole::ReflectionVisual);

    // Portfolio as of the previous close.
    let mut portfolio = portfolio.clone();
    let first_test_day =
        day.phase == Phase::Test && !state.decisions.iter().any(|r| r.phase == Phase::Test);
    if first_test_day && cfg.reset_at_test && !state.decisions.is_empty() {
        portfolio = portfolio.reset();
        events.push(event(date, EventDetail::PortfolioReset));
    }
    let prev = match &state.portfolio_snapshot {
        Some(s) if !(first_test_day && cfg.reset_at_test) => s.clone(),
        _ => mark(&portfolio, prev_bar.date, prev_bar.close)?,
    };

    let history = state.recent(cfg.windows.medium);
    let ctx = PromptContext::new()
        .with("ticker", ticker)
        .with("date", date.to_string())
        .with("current_shares", prev.shares.to_string())
        .with("current_price", prev.share_price)
        .with("avg_purchase_price", prev.avg_purchase_price)
        .with("total_value", prev.total_value)
        .with("cash_reserve", prev.cash)
        .with("cash_percentage", prev.cash_percentage)
        .with("unrealized_pl", prev.unrealized_pl)
        .with("unrealized_profit_percentage", prev.unrealized_pct)
        .with("chart_analysis", chart_analysis.clone())
        .with("news_summary", news_summary.clone())
        .with("reflection_short", reflections.short_term.clone())
        .with("reflection_medium", reflections.medium_term.clone())
        .with("market_intelligence", market_intelligence.clone())
        .with("len_historical_data", history.len())
        .with("json_data", history_json(history, capital));

    let (text, entry) = agents.invoke(AgentRole::Decision, date, &ctx, &[])?;
    run_log.push(entry);
    let mut parsed = parse_decision(&text);
    if cfg.retry_malformed && parsed.events.contains(&ParseEvent::NoRecommendation) {
        events.push(event(date, EventDetail::DecisionRetried));
        let (text, entry) = agents.invoke(AgentRole::Decision, date, &ctx, &[])?;
        run_log.push(entry);
        parsed = parse_decision(&text);
    }
    events.extend(
        parsed
            .events
            .iter()
            .map(|e| event(date, EventDetail::MalformedOutput { event: e.clone() })),
    );
    let decision: TradingDecision = parsed.decision;

    let outcome = portfolio
        .execute(date, &decision, day.open)
        .map_err(|e| Error::Data(DataError::Invalid(e.to_string())))?;
    events.extend(
        outcome
            .events
            .iter()
            .map(|e| event(date, EventDetail::Rule { event: e.clone() })),
    );
    let portfolio = outcome.portfolio;
    let snapshot = mark(&portfolio, date, day.close)?;
    let reward_exact = daily_reward(&prev, &snapshot);
    let reward = match cfg.reward_mode {
        RewardMode::Absolute => reward_exact.to_f64(),
        RewardMode::Percent => reward_exact.to_f64() / prev.total_value * 100.0,
    };

    let mut next = state.clone();
    next.date = Some(date);
    next.news_summary.push(Dated {
        date,
        value: news_summary,
    });
    next.chart_analysis.push(Dated {
        date,
        value: chart_analysis,
    });
    next.reflection_insights = reflections;
    next.market_intelligence = market_intelligence;
    next.portfolio_snapshot = Some(snapshot.clone());
    next.decisions.push(DecisionRecord {
        date,
        phase: day.phase,
        decision,
        fill: outcome.fill,
        snapshot,
        reward_exact,
        reward,
        technical_chart_sha256: sha256_hex(&charts.technical_png),
        signal_chart_sha256: sha256_hex(&charts.signal_png),
    });

    Ok(DayOutcome {
        state: next,
        portfolio,
        events,
        run_log,
        charts,
    })
}

fn mark(p: &Portfolio, date: NaiveDate, price: f64) -> Result<PortfolioSnapshot> {
    p.mark_to_market(date, price)
        .map_err(|e| Error::Data(DataError::Invalid(e.to_string())))
}

/// Bar indices to process, in order, with their phase.
fn plan_days(cfg: &RunConfig, bars: &[Bar]) -> Vec<(usize, Phase)> {
    let mut days = Vec::new();
    for (i, b) in bars.iter().enumerate() {
        if cfg.warmup.is_some_and(|w| w.contains(b.date)) {
            days.push((i, Phase::Warmup));
        } else if cfg.test.contains(b.date) {
            days.push((i, Phase::Test));
        }
    }
    days
}

fn day_context<'a>(
    cfg: &'a RunConfig,
    data: &'a MarketData,
    idx: usize,
    phase: Phase,
) -> DayContext<'a> {
    let history = &data.bars[..idx];
    let bar = &data.bars[idx];
    let news = match history.len() {
        0 => Vec::new(),
        n => {
            let from = history[n.saturating_sub(cfg.windows.news_lookback)].date;
            let to = history[n - 1].date;
            data.news.between(&cfg.ticker, from, to).collect()
        }
    };
    DayContext {
        date: bar.date,
        phase,
        history,
        news,
        open: bar.open,
        close: bar.close,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Written after every completed day.
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` if it exists.
    pub resume: bool,
    /// Where to write each day's chart images.
    pub charts_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_digest: String,
    days_done: usize,
    state: AgentState,
    portfolio: Portfolio,
    backend_state: Option<serde_json::Value>,
    run_log: Vec<RunLogEntry>,
    events: Vec<RunEvent>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Option<Checkpoint>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let fail = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let cp: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string()))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported version {}", cp.version)));
    }
    if cp.config_digest != cfg.digest() {
        return Err(fail("written by a run with a different configuration".into()));
    }
    Ok(Some(cp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub total_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub config: RunConfig,
    /// Test-window metrics; `None` when the curve is too short.
    pub metrics: Option<MetricsReport>,
    pub equity: Vec<EquityPoint>,
    /// Test-window fills.
    pub fills: Vec<Fill>,
    pub events: Vec<RunEvent>,
    /// Every processed day, warmup included.
    pub decisions: Vec<DecisionRecord>,
    pub run_log: Vec<RunLogEntry>,
}

/// Runs warmup then test days. `config` is recorded in the report as
/// given; `data` must be the data it names.
pub fn run_backtest(
    config: &RunConfig,
    data: &MarketData,
    backend: &dyn ChatBackend,
    opts: &RunOptions,
) -> Result<BacktestReport> {
    config.validate()?;
    let days = plan_days(config, &data.bars);
    if !days.iter().any(|(_, p)| *p == Phase::Test) {
        return Err(Error::Data(DataError::Invalid(format!(
            "no bars in test window {} to {}",
            config.test.start, config.test.end
        ))));
    }

    let mut state = AgentState::new(&config.ticker);
    let mut portfolio = Portfolio::with_mode(config.initial_capital, config.share_mode)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut run_log = Vec::new();
    let mut events = Vec::new();
    let mut done = 0;

    if let (true, Some(path)) = (opts.resume, &opts.checkpoint) {
        match load_checkpoint(path, config)? {
            Some(cp) => {
                if let Some(bs) = &cp.backend_state {
                    backend.restore_state(bs)?;
                }
                log::info!("resuming after {} of {} days", cp.days_done, days.len());
                state = cp.state;
                portfolio = cp.portfolio;
                run_log = cp.run_log;
                events = cp.events;
                done = cp.days_done;
            }
            None => log::info!("no checkpoint at {}, starting fresh", path.display()),
        }
    }

    let agents = Agents::new(backend, &config.agents);
    for (n, &(idx, phase)) in days.iter().enumerate().skip(done) {
        let day = day_context(config, data, idx, phase);
        if day.history.is_empty() {
            events.push(event(
                day.date,
                EventDetail::SkippedDay {
                    reason: "no earlier bar to decide from".into(),
                },
            ));
        } else {
            let out = step_day(config, &state, &portfolio, &day, &agents)?;
            if let Some(dir) = &opts.charts_dir {
                write_atomic(&dir.join(format!("technical_{}.png", day.date)), &out.charts.technical_png)?;
                write_atomic(&dir.join(format!("signal_{}.png", day.date)), &out.charts.signal_png)?;
            }
            log::debug!("{} {:?}: {}", day.date, phase, out.record().decision.action);
            state = out.state;
            portfolio = out.portfolio;
            events.extend(out.events);
            run_log.extend(out.run_log);
        }
        if let Some(path) = &opts.checkpoint {
            let cp = Checkpoint {
                version: CHECKPOINT_VERSION,
                config_digest: config.digest(),
                days_done: n + 1,
                state: state.clone(),
                portfolio: portfolio.clone(),
                backend_state: backend.save_state(),
                run_log: run_log.clone(),
                events: events.clone(),
            };
            write_atomic(path, &serde_json::to_vec(&cp)?)?;
        }
    }

    let test: Vec<&DecisionRecord> = state
        .decisions
        .iter()
        .filter(|r| r.phase == Phase::Test)
        .collect();
    let equity: Vec<EquityPoint> = test
        .iter()
        .map(|r| EquityPoint {
            date: r.date,
            total_value: r.snapshot.total_exact.to_f64(),
        })
        .collect();
    let curve = EquityCurve::new(equity.iter().map(|p| (p.date, p.total_value)).collect());
    let metrics = match curve.and_then(|c| MetricsReport::compute(&c, &config.metrics)) {
        Ok(m) => Some(m),
        Err(e) => {
            let last = equity.last().map_or(config.test.end, |p| p.date);
            events.push(event(
                last,
                EventDetail::MetricsUnavailable {
                    reason: e.to_string(),
                },
            ));
            None
        }
    };
    Ok(BacktestReport {
        config: config.clone(),
        metrics,
        equity,
        fills: test.iter().filter_map(|r| r.fill.clone()).collect(),
        events,
        decisions: state.decisions,
        run_log,
    })
}

#[cfg(test)]
mod tests;
