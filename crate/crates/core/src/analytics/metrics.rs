use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("equity curve too short: need {needed} points, have {got}")]
    TooShort { needed: usize, got: usize },
    #[error("Sharpe ratio undefined: returns have zero variance")]
    ZeroVariance,
    #[error("invalid equity curve: {0}")]
    InvalidCurve(String),
}

/// Portfolio value per date; dates strictly increasing, values positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    points: Vec<(NaiveDate, f64)>,
}

impl EquityCurve {
    pub fn new(points: Vec<(NaiveDate, f64)>) -> Result<Self, MetricError> {
        if let Some((d, v)) = points.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(MetricError::InvalidCurve(format!("value {v} on {d} is not positive")));
        }
        if let Some(w) = points.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(MetricError::InvalidCurve(format!(
                "dates not increasing at {}",
                w[1].0
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn require(&self, needed: usize) -> Result<(), MetricError> {
        if self.len() < needed {
            return Err(MetricError::TooShort {
                needed,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Simple (non-compounded) annualized return; `T` counts return
/// intervals, i.e. curve length minus one.
pub fn arr(curve: &EquityCurve, annual_days: f64) -> Result<f64, MetricError> {
    curve.require(2)?;
    let first = curve.points[0].1;
    let last = curve.points[curve.len() - 1].1;
    let intervals = (curve.len() - 1) as f64;
    Ok((last - first) / first * annual_days / intervals)
}

pub fn daily_returns(curve: &EquityCurve) -> Vec<f64> {
    curve
        .points
        .windows(2)
        .map(|w| w[1].1 / w[0].1 - 1.0)
        .collect()
}

/// `(mean(r) - risk_free) / sample_std(r) * annualization` over daily
/// simple returns.
pub fn sharpe(curve: &EquityCurve, risk_free: f64, annualization: f64) -> Result<f64, MetricError> {
    curve.require(3)?;
    let r = daily_returns(curve);
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((mean - risk_free) / sd * annualization)
}

/// Largest relative decline from a running peak, in [0, 1].
pub fn mdd(curve: &EquityCurve) -> Result<f64, MetricError> {
    curve.require(2)?;
    // Normalizing by the first value does not change the ratio, so the
    // raw values are used directly.
    let mut peak = f64::MIN;
    let mut worst = 0.0_f64;
    for v in curve.values() {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub annual_days: f64,
    /// Per-day risk-free rate.
    pub risk_free: f64,
    pub annualization: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            annual_days: 252.0,
            risk_free: 0.0,
            annualization: 252f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arr: f64,
    /// `None` when returns have zero variance.
    pub sharpe_annualized: Option<f64>,
    pub sharpe_daily: Option<f64>,
    pub mdd: f64,
    pub n_days: usize,
}

impl MetricsReport {
    pub fn compute(curve: &EquityCurve, params: &MetricParams) -> Result<Self, MetricError> {
        let arr = arr(curve, params.annual_days)?;
        let mdd = mdd(curve)?;
        let daily = match sharpe(curve, params.risk_free, 1.0) {
            Ok(v) => Some(v),
            Err(MetricError::ZeroVariance | MetricError::TooShort { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            arr,
            sharpe_annualized: daily.map(|d| d * params.annualization),
            sharpe_daily: daily,
            mdd,
            n_days: curve.len(),
        })
    }
}
