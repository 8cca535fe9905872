use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{EquityCurve, MetricError};
use crate::agents::Action;
use crate::market_data::{Bar, DataError, IndicatorFrame};

/// A rule-based strategy producing an all-in/all-out signal from data up
/// to and including one completed bar.
pub trait BaselineStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// Signal after the close of bar `last`, or `None` when no bar has
    /// completed yet. The resulting trade executes at the next open.
    fn signal(&self, frame: &IndicatorFrame, last: Option<usize>) -> Action;
}

pub struct BuyAndHold;

impl BaselineStrategy for BuyAndHold {
    fn name(&self) -> &'static str {
        "bh"
    }

    fn description(&self) -> &'static str {
        "buy-and-hold: fully invested from the first test-day open"
    }

    fn signal(&self, _frame: &IndicatorFrame, _last: Option<usize>) -> Action {
        Action::Buy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cross {
    Above,
    Below,
}

/// Sign change of `a - b` between bars `i - 1` and `i`. Touching zero
/// from one side counts as a cross once the other side is reached.
fn crossing(a: &crate::market_data::Series, b: &crate::market_data::Series, i: usize) -> Option<Cross> {
    if i == 0 {
        return None;
    }
    let prev = a.get(i - 1)? - b.get(i - 1)?;
    let cur = a.get(i)? - b.get(i)?;
    if prev <= 0.0 && cur > 0.0 {
        Some(Cross::Above)
    } else if prev >= 0.0 && cur < 0.0 {
        Some(Cross::Below)
    } else {
        None
    }
}

pub struct MacdCrossover;

impl BaselineStrategy for MacdCrossover {
    fn name(&self) -> &'static str {
        "macd"
    }

    fn description(&self) -> &'static str {
        "MACD line crossing its signal line"
    }

    fn signal(&self, frame: &IndicatorFrame, last: Option<usize>) -> Action {
        match last.and_then(|i| crossing(&frame.macd_line, &frame.macd_signal, i)) {
            Some(Cross::Above) => Action::Buy,
            Some(Cross::Below) => Action::Sell,
            None => Action::Hold,
        }
    }
}

pub struct KdjRsi {
    pub overbought: f64,
    pub oversold: f64,
}

impl Default for KdjRsi {
    fn default() -> Self {
        Self {
            overbought: 70.0,
            oversold: 30.0,
        }
    }
}

impl BaselineStrategy for KdjRsi {
    fn name(&self) -> &'static str {
        "kdj-rsi"
    }

    fn description(&self) -> &'static str {
        "KDJ K/D crossing filtered by RSI"
    }

    fn signal(&self, frame: &IndicatorFrame, last: Option<usize>) -> Action {
        let Some(i) = last else {
            return Action::Hold;
        };
        let Some(rsi) = frame.rsi.get(i) else {
            return Action::Hold;
        };
        match crossing(&frame.kdj_k, &frame.kdj_d, i) {
            Some(Cross::Above) if rsi < self.overbought => Action::Buy,
            Some(Cross::Below) if rsi > self.oversold => Action::Sell,
            _ => Action::Hold,
        }
    }
}

/// Baseline strategies keyed by their command-line name.
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Box<dyn BaselineStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(BuyAndHold));
        reg.register(Box::new(MacdCrossover));
        reg.register(Box::new(KdjRsi::default()));
        reg
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, strategy: Box<dyn BaselineStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Option<&dyn BaselineStrategy> {
        self.strategies.get(name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFill {
    pub date: NaiveDate,
    pub action: Action,
    pub shares: f64,
    pub price: f64,
    pub cash_after: f64,
    pub shares_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSignal {
    pub date: NaiveDate,
    pub action: Action,
    pub executed: bool,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub strategy: &'static str,
    pub curve: EquityCurve,
    pub fills: Vec<BaselineFill>,
    /// The signal acted on at each test day's open.
    pub signals: Vec<BaselineSignal>,
}

/// Simulates `strategy` over the test days `[start, end]`.
///
/// `frame` must be computed from `bars`; bars before `start` only provide
/// indicator history. Trades happen at the open, values are marked at
/// the close.
pub fn run_baseline(
    strategy: &dyn BaselineStrategy,
    bars: &[Bar],
    frame: &IndicatorFrame,
    start: NaiveDate,
    end: NaiveDate,
    capital: f64,
) -> Result<BaselineRun, BaselineError> {
    if frame.dates.len() != bars.len() {
        return Err(BaselineError::Data(DataError::Invalid(
            "indicator frame not aligned with bars".into(),
        )));
    }
    let first = bars.iter().position(|b| b.date >= start && b.date <= end);
    let Some(first) = first else {
        return Err(BaselineError::EmptyWindow { start, end });
    };
    let mut cash = capital;
    let mut shares = 0.0_f64;
    let mut points = Vec::new();
    let mut fills = Vec::new();
    let mut signals = Vec::new();

    for (i, bar) in bars.iter().enumerate().skip(first) {
        if bar.date > end {
            break;
        }
        let action = strategy.signal(frame, i.checked_sub(1));
        let traded = match action {
            Action::Buy if shares == 0.0 => {
                shares = cash / bar.open;
                cash = 0.0;
                Some(shares)
            }
            Action::Sell if shares > 0.0 => {
                let sold = shares;
                cash += sold * bar.open;
                shares = 0.0;
                Some(sold)
            }
            _ => None,
        };
        let executed = traded.is_some();
        if let Some(traded) = traded {
            fills.push(BaselineFill {
                date: bar.date,
                action,
                shares: traded,
                price: bar.open,
                cash_after: cash,
                shares_after: shares,
            });
        }
        signals.push(BaselineSignal {
            date: bar.date,
            action,
            executed,
        });
        points.push((bar.date, cash + shares * bar.close));
    }

    Ok(BaselineRun {
        strategy: strategy.name(),
        curve: EquityCurve::new(points).map_err(BaselineError::Metric)?,
        fills,
        signals,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("no bars between {start} and {end}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(MetricError),
}
