//! Evaluation metrics and rule-based baseline strategies.

mod baselines;
mod metrics;

pub use baselines::{
    run_baseline, BaselineError, BaselineFill, BaselineRun, BaselineSignal, BaselineStrategy, BuyAndHold, KdjRsi,
    MacdCrossover, StrategyRegistry,
};
pub use metrics::{arr, daily_returns, mdd, sharpe, EquityCurve, MetricError, MetricParams, MetricsReport};
