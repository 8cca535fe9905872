//! Chart descriptions for the vision agents and their PNG rendering.
//!
//! Builders produce a [`ChartSpec`] that is independent of any renderer;
//! [`render_png`] turns it into bytes. Both are pure functions.

mod render;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Action;
use crate::market_data::{Bar, IndicatorFrame, Series};

pub use render::{render_png, Rgb};

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart has zero width or height")]
    ZeroDimension,
    #[error("no bars to chart")]
    Empty,
    #[error("indicator frame does not align with bars: {0}")]
    Misaligned(String),
    #[error("decision on {0} is outside the charted bars")]
    DecisionOutsideRange(NaiveDate),
    #[error("invalid chart spec: {0}")]
    InvalidSpec(String),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelKind {
    Candlestick,
    LineSet,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStyle {
    Line,
    Bars,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ohlc {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub values: Series,
    pub color: Rgb,
    pub style: SeriesStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MarkerKind {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub date: NaiveDate,
    pub kind: MarkerKind,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub kind: PanelKind,
    pub label: String,
    pub height: u32,
    pub dates: Vec<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ohlc: Option<Vec<Ohlc>>,
    pub series: Vec<NamedSeries>,
    /// Horizontal reference levels.
    #[serde(default)]
    pub guides: Vec<f64>,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub title: String,
    pub width: u32,
    pub height: u32,
    /// Fewer bars than the requested window were available.
    pub truncated: bool,
    pub panels: Vec<Panel>,
}

impl ChartSpec {
    pub fn validate(&self) -> Result<(), ChartError> {
        if self.width == 0 || self.height == 0 {
            return Err(ChartError::ZeroDimension);
        }
        if self.panels.is_empty() {
            return Err(ChartError::InvalidSpec("no panels".into()));
        }
        let sum: u32 = self.panels.iter().map(|p| p.height).sum();
        if sum != self.height {
            return Err(ChartError::InvalidSpec(format!(
                "panel heights sum to {sum}, chart height is {}",
                self.height
            )));
        }
        for p in &self.panels {
            let n = p.dates.len();
            if p.series.iter().any(|s| s.values.len() != n) {
                return Err(ChartError::InvalidSpec(format!(
                    "panel {:?} has a series not on its date axis",
                    p.label
                )));
            }
            match (&p.kind, &p.ohlc) {
                (PanelKind::Candlestick, Some(o)) if o.len() == n => {}
                (PanelKind::Candlestick, _) => {
                    return Err(ChartError::InvalidSpec(
                        "candlestick panel needs exactly one OHLC series".into(),
                    ))
                }
                (_, Some(_)) => {
                    return Err(ChartError::InvalidSpec(
                        "OHLC data outside a candlestick panel".into(),
                    ))
                }
                _ => {}
            }
            if let Some(m) = p.markers.iter().find(|m| !p.dates.contains(&m.date)) {
                return Err(ChartError::DecisionOutsideRange(m.date));
            }
        }
        Ok(())
    }

    pub fn marker_count(&self) -> usize {
        self.panels.iter().map(|p| p.markers.len()).sum()
    }
}

pub const UP_COLOR: Rgb = Rgb(0x26, 0xA6, 0x9A);
pub const DOWN_COLOR: Rgb = Rgb(0xEF, 0x53, 0x50);
pub const BUY_COLOR: Rgb = Rgb(0x1B, 0x9E, 0x3E);
pub const SELL_COLOR: Rgb = Rgb(0xD3, 0x2F, 0x2F);

const SMA_FAST_COLOR: Rgb = Rgb(0xFF, 0x98, 0x00);
const SMA_SLOW_COLOR: Rgb = Rgb(0x3F, 0x51, 0xB5);
const BAND_COLOR: Rgb = Rgb(0x9E, 0x9E, 0x9E);
const LINE_COLOR: Rgb = Rgb(0x21, 0x96, 0xF3);
const SIGNAL_COLOR: Rgb = Rgb(0xFF, 0x57, 0x22);
const J_COLOR: Rgb = Rgb(0x9C, 0x27, 0xB0);
const VOLUME_COLOR: Rgb = Rgb(0x78, 0x90, 0x9C);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartOptions {
    pub technical_window: usize,
    pub technical_width: u32,
    pub technical_height: u32,
    pub signal_window: usize,
    pub signal_width: u32,
    pub signal_height: u32,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            technical_window: 60,
            technical_width: 1200,
            technical_height: 900,
            signal_window: 30,
            signal_width: 1000,
            signal_height: 500,
        }
    }
}

/// Splits `total` by integer weights; the remainder goes to the first part.
fn split_heights(total: u32, weights: &[u32]) -> Vec<u32> {
    let sum: u32 = weights.iter().sum();
    let mut out: Vec<u32> = weights.iter().map(|w| total * w / sum).collect();
    let used: u32 = out.iter().sum();
    out[0] += total - used;
    out
}

fn series(name: &str, values: &Series, color: Rgb, style: SeriesStyle) -> NamedSeries {
    NamedSeries {
        name: name.to_string(),
        values: values.clone(),
        color,
        style,
    }
}

/// Candlestick chart with SMA/Bollinger overlays, volume, RSI, MACD and
/// KDJ panels over the last `opts.technical_window` bars.
///
/// `bars` and `frame` must share dates; only their trailing window is read.
pub fn build_technical_chart(
    ticker: &str,
    bars: &[Bar],
    frame: &IndicatorFrame,
    opts: &ChartOptions,
) -> Result<ChartSpec, ChartError> {
    if bars.is_empty() {
        return Err(ChartError::Empty);
    }
    if opts.technical_width == 0 || opts.technical_height == 0 {
        return Err(ChartError::ZeroDimension);
    }
    if frame.len() != bars.len() {
        return Err(ChartError::Misaligned(format!(
            "{} bars vs {} frame rows",
            bars.len(),
            frame.len()
        )));
    }
    let window = opts.technical_window.max(1);
    let from = bars.len().saturating_sub(window);
    let bars = &bars[from..];
    let frame = frame.slice(from, frame.len());
    if let Some((b, d)) = bars.iter().zip(&frame.dates).find(|(b, d)| b.date != **d) {
        return Err(ChartError::Misaligned(format!("bar {} vs frame {}", b.date, d)));
    }

    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    let heights = split_heights(opts.technical_height, &[40, 12, 16, 16, 16]);
    let panel = |kind, label: &str, height, series, guides| Panel {
        kind,
        label: label.to_string(),
        height,
        dates: dates.clone(),
        ohlc: None,
        series,
        guides,
        markers: Vec::new(),
    };
    let volume = Series(bars.iter().map(|b| Some(b.volume)).collect());

    let mut price = panel(
        PanelKind::Candlestick,
        "Price / SMA10 / SMA50 / BB(20,2)",
        heights[0],
        vec![
            series("sma_fast", &frame.sma_fast, SMA_FAST_COLOR, SeriesStyle::Line),
            series("sma_slow", &frame.sma_slow, SMA_SLOW_COLOR, SeriesStyle::Line),
            series("bb_upper", &frame.bb_upper, BAND_COLOR, SeriesStyle::Line),
            series("bb_mid", &frame.bb_mid, BAND_COLOR, SeriesStyle::Line),
            series("bb_lower", &frame.bb_lower, BAND_COLOR, SeriesStyle::Line),
        ],
        Vec::new(),
    );
    price.ohlc = Some(
        bars.iter()
            .map(|b| Ohlc {
                open: b.open,
                high: b.high,
                low: b.low,
                close: b.close,
            })
            .collect(),
    );

    let panels = vec![
        price,
        panel(
            PanelKind::Histogram,
            "Volume",
            heights[1],
            vec![series("volume", &volume, VOLUME_COLOR, SeriesStyle::Bars)],
            Vec::new(),
        ),
        panel(
            PanelKind::LineSet,
            "RSI(14)",
            heights[2],
            vec![series("rsi", &frame.rsi, LINE_COLOR, SeriesStyle::Line)],
            vec![30.0, 70.0],
        ),
        panel(
            PanelKind::LineSet,
            "MACD(12,26,9)",
            heights[3],
            vec![
                series("macd_hist", &frame.macd_hist, BAND_COLOR, SeriesStyle::Bars),
                series("macd_line", &frame.macd_line, LINE_COLOR, SeriesStyle::Line),
                series("macd_signal", &frame.macd_signal, SIGNAL_COLOR, SeriesStyle::Line),
            ],
            vec![0.0],
        ),
        panel(
            PanelKind::LineSet,
            "KDJ(9,3,3)",
            heights[4],
            vec![
                series("kdj_k", &frame.kdj_k, LINE_COLOR, SeriesStyle::Line),
                series("kdj_d", &frame.kdj_d, SIGNAL_COLOR, SeriesStyle::Line),
                series("kdj_j", &frame.kdj_j, J_COLOR, SeriesStyle::Line),
            ],
            Vec::new(),
        ),
    ];

    let spec = ChartSpec {
        title: format!(
            "{ticker} daily {} to {}",
            dates[0],
            dates[dates.len() - 1]
        ),
        width: opts.technical_width,
        height: opts.technical_height,
        truncated: bars.len() < window,
        panels,
    };
    spec.validate()?;
    Ok(spec)
}

/// Closing-price line over the last `opts.signal_window` bars with a
/// marker for each BUY/SELL decision. HOLD days carry no marker.
pub fn build_signal_chart(
    ticker: &str,
    bars: &[Bar],
    decisions: &[(NaiveDate, Action)],
    opts: &ChartOptions,
) -> Result<ChartSpec, ChartError> {
    if bars.is_empty() {
        return Err(ChartError::Empty);
    }
    if opts.signal_width == 0 || opts.signal_height == 0 {
        return Err(ChartError::ZeroDimension);
    }
    let window = opts.signal_window.max(1);
    let bars = &bars[bars.len().saturating_sub(window)..];
    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();

    let mut markers = Vec::new();
    for &(date, action) in decisions {
        let idx = dates
            .binary_search(&date)
            .map_err(|_| ChartError::DecisionOutsideRange(date))?;
        let kind = match action {
            Action::Buy => MarkerKind::Buy,
            Action::Sell => MarkerKind::Sell,
            Action::Hold => continue,
        };
        markers.push(Marker {
            date,
            kind,
            price: bars[idx].close,
        });
    }

    let closes = Series(bars.iter().map(|b| Some(b.close)).collect());
    let spec = ChartSpec {
        title: format!(
            "{ticker} closing price and trading signals {} to {}",
            dates[0],
            dates[dates.len() - 1]
        ),
        width: opts.signal_width,
        height: opts.signal_height,
        truncated: bars.len() < window,
        panels: vec![Panel {
            kind: PanelKind::LineSet,
            label: "Close (green = BUY, red = SELL)".into(),
            height: opts.signal_height,
            dates,
            ohlc: None,
            series: vec![series("close", &closes, LINE_COLOR, SeriesStyle::Line)],
            guides: Vec::new(),
            markers,
        }],
    };
    spec.validate()?;
    Ok(spec)
}
