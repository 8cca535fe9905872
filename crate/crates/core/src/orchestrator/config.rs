use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agents::AgentSettings;
use crate::analytics::MetricParams;
use crate::charting::ChartOptions;
use crate::error::{Error, Result};
use crate::gateway::{sha256_hex, BackendConfig};
use crate::market_data::IndicatorParams;
use crate::portfolio::ShareMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// History lengths, in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectionWindows {
    pub short: usize,
    pub medium: usize,
    /// Trading days of news handed to the summarizer, ending at t-1.
    pub news_lookback: usize,
}

impl Default for ReflectionWindows {
    fn default() -> Self {
        Self {
            short: 7,
            medium: 30,
            news_lookback: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Change in total value, in currency.
    #[default]
    Absolute,
    /// Change in total value as a percentage of the previous total.
    Percent,
}

fn default_capital() -> f64 {
    10_000.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ticker: String,
    pub bars_path: PathBuf,
    #[serde(default)]
    pub news_path: Option<PathBuf>,
    #[serde(default)]
    pub warmup: Option<Window>,
    pub test: Window,
    #[serde(default = "default_capital")]
    pub initial_capital: f64,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub agents: AgentSettings,
    #[serde(default)]
    pub indicators: IndicatorParams,
    #[serde(default)]
    pub charts: ChartOptions,
    #[serde(default)]
    pub windows: ReflectionWindows,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub share_mode: ShareMode,
    #[serde(default)]
    pub reward_mode: RewardMode,
    /// Start the test window from initial capital, keeping reflection memory.
    #[serde(default = "yes")]
    pub reset_at_test: bool,
    /// Ask the decision agent once more when its output has no recommendation.
    #[serde(default)]
    pub retry_malformed: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg.normalized())
    }

    fn normalized(mut self) -> Self {
        self.ticker = self.ticker.trim().to_ascii_uppercase();
        self.agents = self.agents.complete();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ticker.is_empty() {
            return bad("ticker is empty".into());
        }
        if self.test.start > self.test.end {
            return bad(format!("test window {} > {}", self.test.start, self.test.end));
        }
        if let Some(w) = self.warmup {
            if w.start > w.end {
                return bad(format!("warmup window {} > {}", w.start, w.end));
            }
            if w.end >= self.test.start {
                return bad("warmup must end before the test window starts".into());
            }
        }
        if !(self.initial_capital.is_finite() && self.initial_capital > 0.0) {
            return bad("initial_capital must be positive".into());
        }
        let w = &self.windows;
        if w.short == 0 || w.medium == 0 || w.news_lookback == 0 {
            return bad("reflection windows must be at least 1".into());
        }
        if self.charts.technical_window == 0 || self.charts.signal_window == 0 {
            return bad("chart windows must be at least 1".into());
        }
        self.indicators
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Copy with relative paths anchored at `base`.
    pub fn resolved_against(&self, base: &Path) -> RunConfig {
        let fix = |p: &Path| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.to_path_buf()
            }
        };
        let mut c = self.clone();
        c.bars_path = fix(&self.bars_path);
        c.news_path = self.news_path.as_deref().map(fix);
        c.backend.script_path = self.backend.script_path.as_deref().map(fix);
        c.backend.cache_dir = fix(&self.backend.cache_dir);
        c
    }

    /// Fingerprint used to refuse resuming under a different config.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
