use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Bar, DataError, PriceField};

/// Date-aligned indicator values; `None` marks insufficient history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Series(pub Vec<Option<f64>>);

impl Series {
    fn undefined(len: usize) -> Self {
        Series(vec![None; len])
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the first defined entry.
    pub fn first_defined(&self) -> Option<usize> {
        self.0.iter().position(Option::is_some)
    }

    pub fn slice(&self, from: usize, to: usize) -> Series {
        Series(self.0[from..to].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorParams {
    pub sma_fast: usize,
    pub sma_slow: usize,
    pub rsi_period: usize,
    pub bollinger_period: usize,
    pub bollinger_width: f64,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub kdj_period: usize,
    pub kdj_k_smoothing: usize,
    pub kdj_d_smoothing: usize,
    pub price_field: PriceField,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            sma_fast: 10,
            sma_slow: 50,
            rsi_period: 14,
            bollinger_period: 20,
            bollinger_width: 2.0,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            kdj_period: 9,
            kdj_k_smoothing: 3,
            kdj_d_smoothing: 3,
            price_field: PriceField::Close,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let windows = [
            ("sma_fast", self.sma_fast),
            ("sma_slow", self.sma_slow),
            ("rsi_period", self.rsi_period),
            ("bollinger_period", self.bollinger_period),
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("kdj_period", self.kdj_period),
            ("kdj_k_smoothing", self.kdj_k_smoothing),
            ("kdj_d_smoothing", self.kdj_d_smoothing),
        ];
        if let Some((name, _)) = windows.iter().find(|(_, w)| *w == 0) {
            return Err(DataError::Invalid(format!("{name} must be positive")));
        }
        if !(self.bollinger_width.is_finite() && self.bollinger_width > 0.0) {
            return Err(DataError::Invalid("bollinger_width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorFrame {
    pub dates: Vec<NaiveDate>,
    pub sma_fast: Series,
    pub sma_slow: Series,
    pub rsi: Series,
    pub bb_upper: Series,
    pub bb_mid: Series,
    pub bb_lower: Series,
    pub macd_line: Series,
    pub macd_signal: Series,
    pub macd_hist: Series,
    pub kdj_k: Series,
    pub kdj_d: Series,
    pub kdj_j: Series,
}

impl IndicatorFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Rows `[from, to)` as a new frame.
    pub fn slice(&self, from: usize, to: usize) -> IndicatorFrame {
        IndicatorFrame {
            dates: self.dates[from..to].to_vec(),
            sma_fast: self.sma_fast.slice(from, to),
            sma_slow: self.sma_slow.slice(from, to),
            rsi: self.rsi.slice(from, to),
            bb_upper: self.bb_upper.slice(from, to),
            bb_mid: self.bb_mid.slice(from, to),
            bb_lower: self.bb_lower.slice(from, to),
            macd_line: self.macd_line.slice(from, to),
            macd_signal: self.macd_signal.slice(from, to),
            macd_hist: self.macd_hist.slice(from, to),
            kdj_k: self.kdj_k.slice(from, to),
            kdj_d: self.kdj_d.slice(from, to),
            kdj_j: self.kdj_j.slice(from, to),
        }
    }
}

/// Mean computed as offset from the first element, so a constant window
/// returns its value exactly.
fn mean(window: &[f64]) -> f64 {
    let base = window[0];
    base + window.iter().map(|x| x - base).sum::<f64>() / window.len() as f64
}

fn sma(values: &[f64], n: usize) -> Series {
    let mut out = Series::undefined(values.len());
    for i in n.saturating_sub(1)..values.len() {
        out.0[i] = Some(mean(&values[i + 1 - n..=i]));
    }
    out
}

/// EMA seeded with the simple mean of the first `n` defined inputs.
fn ema(values: &[Option<f64>], n: usize) -> Series {
    let mut out = Series::undefined(values.len());
    let Some(start) = values.iter().position(Option::is_some) else {
        return out;
    };
    let seed_end = start + n - 1;
    if seed_end >= values.len() {
        return out;
    }
    let seed: Vec<f64> = values[start..=seed_end].iter().map(|v| v.unwrap()).collect();
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut prev = mean(&seed);
    out.0[seed_end] = Some(prev);
    for (i, v) in values.iter().enumerate().skip(seed_end + 1) {
        let x = v.expect("input series has no gaps after its start");
        prev += alpha * (x - prev);
        out.0[i] = Some(prev);
    }
    out
}

fn rsi(closes: &[f64], n: usize) -> Series {
    let mut out = Series::undefined(closes.len());
    if closes.len() <= n {
        return out;
    }
    let gain = |i: usize| (closes[i] - closes[i - 1]).max(0.0);
    let loss = |i: usize| (closes[i - 1] - closes[i]).max(0.0);
    let to_rsi = |g: f64, l: f64| {
        if l == 0.0 {
            if g == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            (100.0 - 100.0 / (1.0 + g / l)).clamp(0.0, 100.0)
        }
    };
    let nf = n as f64;
    let mut avg_gain = (1..=n).map(gain).sum::<f64>() / nf;
    let mut avg_loss = (1..=n).map(loss).sum::<f64>() / nf;
    out.0[n] = Some(to_rsi(avg_gain, avg_loss));
    for i in n + 1..closes.len() {
        avg_gain = ((nf - 1.0) * avg_gain + gain(i)) / nf;
        avg_loss = ((nf - 1.0) * avg_loss + loss(i)) / nf;
        out.0[i] = Some(to_rsi(avg_gain, avg_loss));
    }
    out
}

fn bollinger(closes: &[f64], n: usize, width: f64) -> (Series, Series, Series) {
    let len = closes.len();
    let (mut upper, mut mid, mut lower) = (
        Series::undefined(len),
        Series::undefined(len),
        Series::undefined(len),
    );
    for i in n.saturating_sub(1)..len {
        let window = &closes[i + 1 - n..=i];
        let m = mean(window);
        let var = window.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let half = width * var.sqrt();
        upper.0[i] = Some(m + half);
        mid.0[i] = Some(m);
        lower.0[i] = Some(m - half);
    }
    (upper, mid, lower)
}

/// Recursive KDJ: K and D start at 50 and are smoothed as
/// `(prev * (m - 1) + input) / m`; J = 3K - 2D. A flat high/low window
/// gives a raw stochastic of 50.
fn kdj(bars: &[(f64, f64, f64)], n: usize, m_k: usize, m_d: usize) -> (Series, Series, Series) {
    let len = bars.len();
    let (mut k, mut d, mut j) = (
        Series::undefined(len),
        Series::undefined(len),
        Series::undefined(len),
    );
    let (mut k_prev, mut d_prev) = (50.0, 50.0);
    let (wk, wd) = (m_k as f64, m_d as f64);
    for i in n.saturating_sub(1)..len {
        let window = &bars[i + 1 - n..=i];
        let hh = window.iter().map(|b| b.0).fold(f64::MIN, f64::max);
        let ll = window.iter().map(|b| b.1).fold(f64::MAX, f64::min);
        let close = bars[i].2;
        let rsv = if hh > ll {
            (close - ll) / (hh - ll) * 100.0
        } else {
            50.0
        };
        k_prev += (rsv - k_prev) / wk;
        d_prev += (k_prev - d_prev) / wd;
        k.0[i] = Some(k_prev);
        d.0[i] = Some(d_prev);
        j.0[i] = Some(3.0 * k_prev - 2.0 * d_prev);
    }
    (k, d, j)
}

pub fn compute_indicators(
    bars: &[Bar],
    params: &IndicatorParams,
) -> Result<IndicatorFrame, DataError> {
    if bars.is_empty() {
        return Err(DataError::Empty);
    }
    if bars.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(DataError::Invalid(
            "bars must be strictly increasing in date".into(),
        ));
    }
    params.validate()?;

    // Adjusted mode rescales the whole bar by adjusted/raw close.
    let hlc: Vec<(f64, f64, f64)> = bars
        .iter()
        .map(|b| {
            let price = b.price(params.price_field);
            let factor = price / b.close;
            (b.high * factor, b.low * factor, price)
        })
        .collect();
    let closes: Vec<f64> = hlc.iter().map(|b| b.2).collect();

    let (bb_upper, bb_mid, bb_lower) =
        bollinger(&closes, params.bollinger_period, params.bollinger_width);

    let as_opt: Vec<Option<f64>> = closes.iter().copied().map(Some).collect();
    let fast = ema(&as_opt, params.macd_fast);
    let slow = ema(&as_opt, params.macd_slow);
    let macd_line = Series(
        fast.0
            .iter()
            .zip(&slow.0)
            .map(|(f, s)| Some(f.as_ref()? - s.as_ref()?))
            .collect(),
    );
    let macd_signal = ema(&macd_line.0, params.macd_signal);
    let macd_hist = Series(
        macd_line
            .0
            .iter()
            .zip(&macd_signal.0)
            .map(|(l, s)| Some(l.as_ref()? - s.as_ref()?))
            .collect(),
    );

    let (kdj_k, kdj_d, kdj_j) = kdj(
        &hlc,
        params.kdj_period,
        params.kdj_k_smoothing,
        params.kdj_d_smoothing,
    );

    Ok(IndicatorFrame {
        dates: bars.iter().map(|b| b.date).collect(),
        sma_fast: sma(&closes, params.sma_fast),
        sma_slow: sma(&closes, params.sma_slow),
        rsi: rsi(&closes, params.rsi_period),
        bb_upper,
        bb_mid,
        bb_lower,
        macd_line,
        macd_signal,
        macd_hist,
        kdj_k,
        kdj_d,
        kdj_j,
    })
}
