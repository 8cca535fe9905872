mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use finvision::agents::Action;
use finvision::analytics::{run_baseline, EquityCurve, MetricsReport, StrategyRegistry};
use finvision::gateway::{cache_clear, cache_stats, BackendRegistry, ChatBackend, GatewayError};
use finvision::market_data::{compute_indicators, Bar};
use finvision::orchestrator::{
    build_day_charts, run_backtest, EventDetail, MarketData, RunEvent, RunOptions,
};
use finvision::report::RunOutput;
use finvision::{Error, Result};

use crate::config::LoadedConfig;

#[derive(Parser)]
#[command(name = "finvision", version, about = "Multi-agent LLM trading backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent pipeline over the warmup and test windows.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a rule-based baseline over the test window.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the two chart images the agents would see on a date.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Inspect or empty the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
        /// Take the cache directory from this config file.
        #[arg(long, global = true)]
        config: Option<PathBuf>,
        /// Cache directory; overrides the config.
        #[arg(long, global = true)]
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum CacheAction {
    Stats,
    Clear,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            resume,
            output,
        } => cmd_run(&config, resume, output.as_deref()),
        Command::Baseline {
            config,
            strategy,
            output,
        } => cmd_baseline(&config, &strategy, output.as_deref()),
        Command::Render {
            config,
            date,
            output,
        } => cmd_render(&config, date, output.as_deref()),
        Command::Cache {
            action,
            config,
            dir,
        } => cmd_cache(action, config.as_deref(), dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load(config: &Path) -> Result<LoadedConfig> {
    let loaded = LoadedConfig::load(config)?;
    init_logging(&loaded.written.log_level);
    Ok(loaded)
}

fn build_backend(cfg: &finvision::orchestrator::RunConfig) -> Result<Box<dyn ChatBackend>> {
    BackendRegistry::default()
        .build(&cfg.backend)
        .map_err(|e| match e {
            GatewayError::Config(msg) => Error::Config(msg),
            other => other.into(),
        })
}

fn cmd_run(config: &Path, resume: bool, output: Option<&Path>) -> Result<()> {
    let loaded = load(config)?;
    let resolved = loaded.run_resolved();
    let out = loaded.output_dir(output);
    let data = MarketData::load(&resolved)?;
    let backend = build_backend(&resolved)?;
    let opts = RunOptions {
        checkpoint: Some(out.join("checkpoint.json")),
        resume,
        charts_dir: Some(out.join("charts")),
    };
    let report = match run_backtest(&loaded.written.run, &data, backend.as_ref(), &opts) {
        Ok(r) => r,
        Err(e) => {
            if e.exit_code() == 4 {
                eprintln!(
                    "checkpoint kept at {}; rerun with --resume to continue",
                    out.join("checkpoint.json").display()
                );
            }
            return Err(e);
        }
    };
    let run_output = RunOutput::from_backtest("FinVision", &report)?;
    run_output.write(&out, &loaded.resolved_json(&out)?)?;
    print!("{}", run_output.summary_markdown());
    log::info!("outputs written to {}", out.display());
    Ok(())
}

fn cmd_baseline(config: &Path, strategy: &str, output: Option<&Path>) -> Result<()> {
    let registry = StrategyRegistry::default();
    let Some(strat) = registry.get(strategy) else {
        return Err(Error::config(format!(
            "unknown strategy {strategy:?}; valid strategies: {}",
            registry.names().join(", ")
        )));
    };
    let loaded = load(config)?;
    let cfg = loaded.run_resolved();
    let out = match output {
        Some(p) => p.to_path_buf(),
        None => loaded.output_dir(None).join(format!("baseline-{strategy}")),
    };
    let bars = MarketData::load(&cfg)?.bars;
    let frame = compute_indicators(&bars, &cfg.indicators)?;
    let run = run_baseline(strat, &bars, &frame, cfg.test.start, cfg.test.end, cfg.initial_capital)
        .map_err(|e| Error::Data(finvision::market_data::DataError::Invalid(e.to_string())))?;
    let mut events = Vec::new();
    let metrics = match MetricsReport::compute(&run.curve, &cfg.metrics) {
        Ok(m) => Some(m),
        Err(e) => {
            events.push(metrics_event(&run.curve, e.to_string()));
            None
        }
    };
    let config_json = serde_json::to_value(&loaded.written)?;
    let run_output = RunOutput::from_baseline(config_json, &run, metrics, events)?;
    run_output.write(&out, &loaded.resolved_json(&out)?)?;
    print!("{}", run_output.summary_markdown());
    Ok(())
}

fn metrics_event(curve: &EquityCurve, reason: String) -> RunEvent {
    RunEvent {
        date: curve.points().last().map(|p| p.0).unwrap_or_default(),
        detail: EventDetail::MetricsUnavailable { reason },
    }
}

/// Trading days on either side of a date missing from the bars.
fn nearest_days(bars: &[Bar], date: NaiveDate) -> String {
    let idx = bars.partition_point(|b| b.date < date);
    let before = idx.checked_sub(1).map(|i| bars[i].date.to_string());
    let after = bars.get(idx).map(|b| b.date.to_string());
    match (before, after) {
        (Some(b), Some(a)) => format!("nearest trading days are {b} and {a}"),
        (Some(b), None) => format!("last trading day is {b}"),
        (None, Some(a)) => format!("first trading day is {a}"),
        (None, None) => "no trading days loaded".into(),
    }
}

/// Decisions recorded by an earlier run, if its output exists.
fn prior_decisions(dir: &Path) -> Result<Vec<(NaiveDate, Action)>> {
    let path = dir.join("decisions.jsonl");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let date = serde_json::from_value(v["date"].clone())?;
        let action = serde_json::from_value(v["decision"]["action"].clone())?;
        out.push((date, action));
    }
    Ok(out)
}

fn cmd_render(config: &Path, date: NaiveDate, output: Option<&Path>) -> Result<()> {
    let loaded = load(config)?;
    let cfg = loaded.run_resolved();
    let run_dir = loaded.output_dir(None);
    let out = output.map_or_else(|| run_dir.join("charts"), Path::to_path_buf);
    let bars = MarketData::load(&cfg)?.bars;
    let Ok(idx) = bars.binary_search_by_key(&date, |b| b.date) else {
        return Err(Error::config(format!(
            "{date} is not a trading day; {}",
            nearest_days(&bars, date)
        )));
    };
    if idx == 0 {
        return Err(Error::config(format!(
            "{date} is the first bar; there is no history to chart"
        )));
    }
    let decisions: Vec<_> = prior_decisions(&run_dir)?
        .into_iter()
        .filter(|(d, _)| *d < date)
        .collect();
    let charts = build_day_charts(&cfg, &bars[..idx], &decisions)?;
    if charts.technical.truncated || charts.signal.truncated {
        log::warn!("insufficient history before {date}; chart truncated");
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for (name, bytes) in [
        (format!("technical_{date}.png"), &charts.technical_png),
        (format!("signal_{date}.png"), &charts.signal_png),
    ] {
        let path = out.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_cache(action: CacheAction, config: Option<&Path>, dir: Option<&Path>) -> Result<()> {
    let dir = match (dir, config) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(c)) => load(c)?.run_resolved().backend.cache_dir,
        (None, None) => finvision::gateway::BackendConfig::default().cache_dir,
    };
    let stats = match action {
        CacheAction::Stats => cache_stats(&dir),
        CacheAction::Clear => cache_clear(&dir).and_then(|_| cache_stats(&dir)),
    }
    .map_err(|e| Error::io(&dir, e))?;
    println!("{stats}");
    Ok(())
}
