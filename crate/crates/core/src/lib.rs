//! Multi-agent trading backtests over daily bars: data and indicators,
//! chart images, an LLM gateway, the agent pipeline, portfolio rules and
//! evaluation metrics.

pub mod agents;
pub mod analytics;
pub mod charting;
pub mod error;
pub mod gateway;
pub mod market_data;
pub mod orchestrator;
pub mod portfolio;
pub mod report;

pub use error::{Error, Result};
