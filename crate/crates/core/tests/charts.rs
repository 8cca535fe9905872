use chrono::{Days, NaiveDate};
use finvision::agents::Action;
use finvision::charting::{build_signal_chart, build_technical_chart, render_png, ChartOptions};
use finvision::gateway::sha256_hex;
use finvision::market_data::{compute_indicators, Bar, IndicatorParams};

// Recorded from a reviewed render. Any drawing change must update these
// after looking at the new images.
const TECHNICAL_SHA256: &str = "fce98f6838eac7c72396f0a9e3b6b23eabaff0a6abe7e46fa178c637125bf29e";
const SIGNAL_SHA256: &str = "993846e0ac7aa8379c836880608320bce0d54d6ff7e6d352ab254ab6afa4969d";

fn ten_bars() -> Vec<Bar> {
    let d0 = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let closes = [10.0, 10.4, 10.1, 10.8, 11.2, 10.9, 11.5, 11.1, 11.9, 12.3];
    closes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let open = if i == 0 { 9.8 } else { closes[i - 1] };
            Bar {
                date: d0 + Days::new(i as u64),
                open,
                high: f64::max(open, c) + 0.3,
                low: f64::min(open, c) - 0.2,
                close: c,
                volume: 1000.0 + 100.0 * i as f64,
                adjusted_close: None,
            }
        })
        .collect()
}

fn opts() -> ChartOptions {
    ChartOptions {
        technical_window: 10,
        technical_width: 640,
        technical_height: 480,
        signal_window: 10,
        signal_width: 640,
        signal_height: 240,
    }
}

fn digests() -> (String, String) {
    let bars = ten_bars();
    let frame = compute_indicators(&bars, &IndicatorParams::default()).unwrap();
    let tech = build_technical_chart("TEST", &bars, &frame, &opts()).unwrap();
    let decisions = [(bars[2].date, Action::Buy), (bars[6].date, Action::Sell), (bars[7].date, Action::Hold)];
    let sig = build_signal_chart("TEST", &bars, &decisions, &opts()).unwrap();
    (
        sha256_hex(&render_png(&tech).unwrap()),
        sha256_hex(&render_png(&sig).unwrap()),
    )
}

#[test]
fn ten_bar_charts_match_golden_digests() {
    let (tech, sig) = digests();
    assert_eq!(tech, TECHNICAL_SHA256, "technical chart changed");
    assert_eq!(sig, SIGNAL_SHA256, "signal chart changed");
}

#[test]
fn rendering_is_repeatable() {
    assert_eq!(digests(), digests());
}

