//! Output files of a run: report.json, CSVs, JSON-lines logs and the
//! markdown summary.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{json, Value};

use crate::agents::{Action, RunLogEntry};
use crate::analytics::{BaselineRun, MetricsReport};
use crate::error::{Error, Result};
use crate::orchestrator::{round2, BacktestReport, EquityPoint, RunEvent};

pub const SCHEMA_VERSION: u32 = 1;

/// One fills.csv row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FillRow {
    pub date: NaiveDate,
    pub action: Action,
    pub shares: f64,
    pub price: f64,
    pub requested_pct: f64,
    pub executed_pct: f64,
    pub cash_after: f64,
    pub shares_after: f64,
}

/// Run results in the shape shared by agent runs and baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub label: String,
    pub config: Value,
    pub metrics: Option<MetricsReport>,
    pub equity: Vec<EquityPoint>,
    pub fills: Vec<FillRow>,
    pub events: Vec<RunEvent>,
    /// One JSON object per line of decisions.jsonl.
    pub decisions: Vec<Value>,
    pub run_log: Vec<RunLogEntry>,
}

impl RunOutput {
    pub fn from_backtest(label: &str, r: &BacktestReport) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            config: serde_json::to_value(&r.config)?,
            metrics: r.metrics.clone(),
            equity: r.equity.clone(),
            fills: r
                .fills
                .iter()
                .map(|f| FillRow {
                    date: f.date,
                    action: f.action,
                    shares: f.shares,
                    price: f.price,
                    requested_pct: f64::from(f.requested_pct),
                    executed_pct: f.executed_pct,
                    cash_after: f.cash_after,
                    shares_after: f.shares_after,
                })
                .collect(),
            events: r.events.clone(),
            decisions: r
                .decisions
                .iter()
                .map(serde_json::to_value)
                .collect::<std::result::Result<_, _>>()?,
            run_log: r.run_log.clone(),
        })
    }

    pub fn from_baseline(
        config: Value,
        run: &BaselineRun,
        metrics: Option<MetricsReport>,
        events: Vec<RunEvent>,
    ) -> Result<Self> {
        Ok(Self {
            label: run.strategy.to_string(),
            config,
            metrics,
            equity: run
                .curve
                .points()
                .iter()
                .map(|&(date, total_value)| EquityPoint { date, total_value })
                .collect(),
            fills: run
                .fills
                .iter()
                .map(|f| FillRow {
                    date: f.date,
                    action: f.action,
                    shares: f.shares,
                    price: f.price,
                    requested_pct: 100.0,
                    executed_pct: 100.0,
                    cash_after: f.cash_after,
                    shares_after: f.shares_after,
                })
                .collect(),
            events,
            decisions: run
                .signals
                .iter()
                .map(serde_json::to_value)
                .collect::<std::result::Result<_, _>>()?,
            run_log: Vec::new(),
        })
    }

    /// report.json contents. Money is rounded to cents.
    pub fn report_json(&self) -> Value {
        let equity: Vec<Value> = self
            .equity
            .iter()
            .map(|p| json!({"date": p.date, "total_value": round2(p.total_value)}))
            .collect();
        let fills: Vec<Value> = self.fills.iter().map(fill_json).collect();
        json!({
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "metrics": self.metrics,
            "equity": equity,
            "fills": fills,
            "events": self.events,
        })
    }

    pub fn summary_markdown(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", v * 100.0));
        let m = self.metrics.as_ref();
        format!(
            "| Strategy | ARR% | SR% | MDD% |\n|---|---|---|---|\n| {} | {} | {} | {} |\n",
            self.label,
            pct(m.map(|m| m.arr)),
            pct(m.and_then(|m| m.sharpe_annualized)),
            pct(m.map(|m| m.mdd)),
        )
    }

    /// Writes every output file except charts into `dir`.
    pub fn write(&self, dir: &Path, resolved_config: &Value) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("report.json"), &pretty(&self.report_json())?)?;
        write_file(&dir.join("config.resolved.json"), &pretty(resolved_config)?)?;
        write_file(&dir.join("summary.md"), self.summary_markdown().as_bytes())?;

        let mut equity = csv::Writer::from_writer(Vec::new());
        equity
            .write_record(["date", "total_value"])
            .and_then(|_| {
                for p in &self.equity {
                    equity.write_record([p.date.to_string(), format!("{:.2}", p.total_value)])?;
                }
                Ok(())
            })
            .map_err(csv_err)?;
        write_file(&dir.join("equity.csv"), &equity.into_inner().map_err(|e| csv_err(e.into_error().into()))?)?;

        let mut fills = csv::Writer::from_writer(Vec::new());
        fills
            .write_record([
                "date",
                "action",
                "shares",
                "price",
                "requested_pct",
                "executed_pct",
                "cash_after",
                "shares_after",
            ])
            .map_err(csv_err)?;
        for f in &self.fills {
            fills
                .write_record([
                    f.date.to_string(),
                    f.action.to_string(),
                    format!("{:.8}", f.shares),
                    format!("{:.2}", f.price),
                    format!("{}", f.requested_pct),
                    format!("{:.4}", f.executed_pct),
                    format!("{:.2}", f.cash_after),
                    format!("{:.8}", f.shares_after),
                ])
                .map_err(csv_err)?;
        }
        write_file(&dir.join("fills.csv"), &fills.into_inner().map_err(|e| csv_err(e.into_error().into()))?)?;

        write_file(&dir.join("decisions.jsonl"), &json_lines(&self.decisions)?)?;
        if !self.run_log.is_empty() {
            write_file(&dir.join("runlog.jsonl"), &json_lines(&self.run_log)?)?;
        }
        Ok(())
    }
}

fn fill_json(f: &FillRow) -> Value {
    json!({
        "date": f.date,
        "action": f.action,
        "shares": f.shares,
        "price": f.price,
        "requested_pct": f.requested_pct,
        "executed_pct": f.executed_pct,
        "cash_after": round2(f.cash_after),
        "shares_after": f.shares_after,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: "csv".into(),
        source: std::io::Error::other(e),
    }
}

fn pretty(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

fn json_lines<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
