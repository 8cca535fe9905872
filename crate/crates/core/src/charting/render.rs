use font8x8::UnicodeFonts;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ChartError, ChartSpec, MarkerKind, Panel, PanelKind, SeriesStyle};
use super::{BUY_COLOR, DOWN_COLOR, SELL_COLOR, UP_COLOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("#{:02X}{:02X}{:02X}", self.0, self.1, self.2))
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let hex = s.strip_prefix('#').unwrap_or(&s);
        let bytes = hex::decode(hex).map_err(serde::de::Error::custom)?;
        match bytes[..] {
            [r, g, b] => Ok(Rgb(r, g, b)),
            _ => Err(serde::de::Error::custom("expected #RRGGBB")),
        }
    }
}

const BACKGROUND: Rgb = Rgb(0xFF, 0xFF, 0xFF);
const FRAME: Rgb = Rgb(0xBD, 0xBD, 0xBD);
const GRID: Rgb = Rgb(0xEE, 0xEE, 0xEE);
const GUIDE: Rgb = Rgb(0x90, 0x90, 0x90);
const TEXT: Rgb = Rgb(0x21, 0x21, 0x21);

const LEFT: i64 = 8;
const RIGHT: i64 = 72;
const PANEL_TOP: i64 = 14;
const PANEL_BOTTOM: i64 = 4;
const GLYPH: i64 = 8;

struct Canvas {
    width: i64,
    height: i64,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        let mut pixels = vec![0u8; width as usize * height as usize * 3];
        for px in pixels.chunks_exact_mut(3) {
            px.copy_from_slice(&[BACKGROUND.0, BACKGROUND.1, BACKGROUND.2]);
        }
        Self {
            width: i64::from(width),
            height: i64::from(height),
            pixels,
        }
    }

    fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return;
        }
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&[c.0, c.1, c.2]);
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        let (xa, xb) = (x0.min(x1), x0.max(x1));
        let (ya, yb) = (y0.min(y1), y0.max(y1));
        for y in ya..=yb {
            for x in xa..=xb {
                self.set(x, y, c);
            }
        }
    }

    fn hline(&mut self, x0: i64, x1: i64, y: i64, c: Rgb, dash: Option<i64>) {
        for x in x0.min(x1)..=x0.max(x1) {
            if dash.is_none_or(|d| (x / d) % 2 == 0) {
                self.set(x, y, c);
            }
        }
    }

    /// Bresenham line.
    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn triangle(&mut self, cx: i64, cy: i64, size: i64, up: bool, c: Rgb) {
        for row in 0..=size {
            let half = row * 2 / 3;
            let y = if up { cy + row } else { cy - row };
            self.hline(cx - half, cx + half, y, c, None);
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb) {
        for (i, ch) in s.chars().enumerate() {
            let glyph = font8x8::BASIC_FONTS
                .get(ch)
                .unwrap_or_else(|| font8x8::BASIC_FONTS.get('?').unwrap());
            let gx = x + i as i64 * GLYPH;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits & (1 << col) != 0 {
                        self.set(gx + col, y + row as i64, c);
                    }
                }
            }
        }
    }
}

/// Maps values onto a vertical pixel range.
struct Scale {
    lo: f64,
    hi: f64,
    top: i64,
    bottom: i64,
}

impl Scale {
    fn y(&self, v: f64) -> i64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        self.bottom - (t * (self.bottom - self.top) as f64).round() as i64
    }
}

fn panel_range(panel: &Panel) -> (f64, f64) {
    let mut values: Vec<f64> = panel
        .series
        .iter()
        .flat_map(|s| s.values.0.iter().flatten().copied())
        .chain(panel.guides.iter().copied())
        .chain(panel.markers.iter().map(|m| m.price))
        .collect();
    if let Some(ohlc) = &panel.ohlc {
        values.extend(ohlc.iter().flat_map(|o| [o.high, o.low]));
    }
    if panel.series.iter().any(|s| s.style == SeriesStyle::Bars) {
        values.push(0.0);
    }
    let values: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn format_value(v: f64) -> String {
    let a = v.abs();
    if a >= 1e9 {
        format!("{:.2}B", v / 1e9)
    } else if a >= 1e6 {
        format!("{:.2}M", v / 1e6)
    } else if a >= 1e4 {
        format!("{:.1}K", v / 1e3)
    } else {
        format!("{v:.2}")
    }
}

fn draw_panel(canvas: &mut Canvas, panel: &Panel, y0: i64, width: i64) {
    let top = y0 + PANEL_TOP;
    let bottom = y0 + i64::from(panel.height) - PANEL_BOTTOM - 1;
    let left = LEFT;
    let right = width - RIGHT;
    if bottom <= top || right <= left {
        return;
    }
    let (lo, hi) = panel_range(panel);
    let scale = Scale {
        lo,
        hi,
        top,
        bottom,
    };
    let n = panel.dates.len().max(1) as i64;
    let plot_w = right - left;
    let x_of = |i: usize| left + ((2 * i as i64 + 1) * plot_w) / (2 * n);
    let half_body = ((plot_w / n) * 3 / 8).max(0);

    for k in 1..4 {
        let y = top + (bottom - top) * k / 4;
        canvas.hline(left, right, y, GRID, None);
    }
    canvas.hline(left, right, top, FRAME, None);
    canvas.hline(left, right, bottom, FRAME, None);
    canvas.line(left, top, left, bottom, FRAME);
    canvas.line(right, top, right, bottom, FRAME);
    canvas.text(left + 2, y0 + 3, &panel.label, TEXT);
    canvas.text(right + 4, top, &format_value(hi), TEXT);
    canvas.text(right + 4, bottom - GLYPH + 1, &format_value(lo), TEXT);

    for g in &panel.guides {
        let y = scale.y(*g);
        canvas.hline(left + 1, right - 1, y, GUIDE, Some(4));
        // Skip labels that would overprint the range labels.
        if y - GLYPH / 2 >= top + GLYPH && y + GLYPH / 2 < bottom - GLYPH + 1 {
            canvas.text(right + 4, y - GLYPH / 2, &format_value(*g), GUIDE);
        }
    }

    for s in panel.series.iter().filter(|s| s.style == SeriesStyle::Bars) {
        let base = scale.y(0.0f64.clamp(lo, hi));
        for (i, v) in s.values.0.iter().enumerate() {
            if let Some(v) = v {
                let x = x_of(i);
                canvas.fill_rect(x - half_body, base, x + half_body, scale.y(*v), s.color);
            }
        }
    }

    if panel.kind == PanelKind::Candlestick {
        if let Some(ohlc) = &panel.ohlc {
            for (i, o) in ohlc.iter().enumerate() {
                let x = x_of(i);
                let color = if o.close >= o.open { UP_COLOR } else { DOWN_COLOR };
                canvas.line(x, scale.y(o.high), x, scale.y(o.low), color);
                canvas.fill_rect(
                    x - half_body,
                    scale.y(o.open),
                    x + half_body,
                    scale.y(o.close),
                    color,
                );
            }
        }
    }

    for s in panel.series.iter().filter(|s| s.style == SeriesStyle::Line) {
        let mut prev: Option<(i64, i64)> = None;
        for (i, v) in s.values.0.iter().enumerate() {
            match v {
                Some(v) => {
                    let p = (x_of(i), scale.y(*v));
                    match prev {
                        Some(q) => canvas.line(q.0, q.1, p.0, p.1, s.color),
                        None => canvas.set(p.0, p.1, s.color),
                    }
                    prev = Some(p);
                }
                None => prev = None,
            }
        }
    }

    for m in &panel.markers {
        if let Some(i) = panel.dates.iter().position(|d| *d == m.date) {
            let (x, y) = (x_of(i), scale.y(m.price));
            match m.kind {
                MarkerKind::Buy => canvas.triangle(x, y + 2, 9, true, BUY_COLOR),
                MarkerKind::Sell => canvas.triangle(x, y - 2, 9, false, SELL_COLOR),
            }
        }
    }
}

/// Renders `spec` to an 8-bit RGB PNG. Output depends only on the spec.
pub fn render_png(spec: &ChartSpec) -> Result<Vec<u8>, ChartError> {
    spec.validate()?;
    let mut canvas = Canvas::new(spec.width, spec.height);
    let mut y0 = 0i64;
    for (idx, panel) in spec.panels.iter().enumerate() {
        let width = canvas.width;
        draw_panel(&mut canvas, panel, y0, width);
        if idx == 0 {
            // Right-aligned, cut short rather than drawn over the panel label.
            let label_end = LEFT + 2 + (panel.label.chars().count() as i64 + 2) * GLYPH;
            let room = ((canvas.width - RIGHT - label_end) / GLYPH).max(0) as usize;
            let title: String = if spec.title.chars().count() <= room {
                spec.title.clone()
            } else {
                let keep = room.saturating_sub(2);
                spec.title.chars().take(keep).chain("..".chars()).take(room).collect()
            };
            let title_x = canvas.width - RIGHT - title.chars().count() as i64 * GLYPH;
            canvas.text(title_x, 3, &title, TEXT);
        }
        y0 += i64::from(panel.height);
    }
    if let Some(last) = spec.panels.last() {
        if let (Some(first_d), Some(last_d)) = (last.dates.first(), last.dates.last()) {
            let y = canvas.height - GLYPH - 1;
            canvas.text(LEFT + 2, y - PANEL_BOTTOM, &first_d.to_string(), GUIDE);
            let label = last_d.to_string();
            let x = canvas.width - RIGHT - 2 - label.len() as i64 * GLYPH;
            canvas.text(x, y - PANEL_BOTTOM, &label, GUIDE);
        }
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, spec.width, spec.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| ChartError::Encode(e.to_string()))?;
        writer
            .write_image_data(&canvas.pixels)
            .map_err(|e| ChartError::Encode(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charting::{build_signal_chart, build_technical_chart, ChartOptions};
    use crate::market_data::{compute_indicators, IndicatorParams};

    fn png_dims(bytes: &[u8]) -> (u32, u32) {
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
        let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
        let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
        (w, h)
    }

    #[test]
    fn deterministic_and_sized() {
        let bars = crate::charting::tests::synthetic_bars(80);
        let frame = compute_indicators(&bars, &IndicatorParams::default()).unwrap();
        let opts = ChartOptions {
            technical_width: 800,
            technical_height: 600,
            ..Default::default()
        };
        let spec = build_technical_chart("AAPL", &bars, &frame, &opts).unwrap();
        let a = render_png(&spec).unwrap();
        let b = render_png(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(png_dims(&a), (800, 600));

        let sig = build_signal_chart("AAPL", &bars, &[], &ChartOptions::default()).unwrap();
        assert_eq!(png_dims(&render_png(&sig).unwrap()), (1000, 500));
    }

    #[test]
    fn zero_dimension_rejected() {
        let bars = crate::charting::tests::synthetic_bars(10);
        let mut spec = build_signal_chart("A", &bars, &[], &ChartOptions::default()).unwrap();
        spec.width = 0;
        assert_eq!(render_png(&spec), Err(ChartError::ZeroDimension));
    }

    #[test]
    fn colors_round_trip_as_hex() {
        let s = serde_json::to_string(&UP_COLOR).unwrap();
        assert_eq!(s, "\"#26A69A\"");
        assert_eq!(serde_json::from_str::<Rgb>(&s).unwrap(), UP_COLOR);
    }
}
