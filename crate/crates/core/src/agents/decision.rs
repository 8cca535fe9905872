use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Buy => "BUY",
            Action::Sell => "SELL",
            Action::Hold => "HOLD",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Action, position size in percent of portfolio value, and rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingDecision {
    pub action: Action,
    pub position_size: u8,
    pub explanation: String,
}

impl TradingDecision {
    pub const MAX_SIZE: u8 = 10;

    pub fn hold(explanation: impl Into<String>) -> Self {
        Self {
            action: Action::Hold,
            position_size: 0,
            explanation: explanation.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let size_ok = match self.action {
            Action::Hold => self.position_size == 0,
            _ => (1..=Self::MAX_SIZE).contains(&self.position_size),
        };
        size_ok && !self.explanation.trim().is_empty()
    }

    /// Canonical three-line rendering accepted by [`parse_decision`].
    pub fn format(&self) -> String {
        format!(
            "Recommendation: {}\nPosition Size: {}\nExplanation: {}",
            self.action, self.position_size, self.explanation
        )
    }
}

/// Irregularities found while parsing model output. None of them abort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseEvent {
    /// No parsable action; decision replaced by HOLD/0.
    NoRecommendation,
    /// BUY/SELL size outside [1, 10], clamped.
    SizeOutOfRange { raw: i64, clamped: u8 },
    /// BUY/SELL without a size; defaulted to 1.
    SizeMissing,
    /// HOLD with a nonzero size, coerced to 0.
    HoldWithNonzeroSize { raw: i64 },
    /// No explanation text at all; a placeholder was used.
    EmptyExplanation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDecision {
    pub decision: TradingDecision,
    pub events: Vec<ParseEvent>,
}

impl ParsedDecision {
    pub fn is_clean(&self) -> bool {
        self.events.is_empty()
    }
}

const NO_EXPLANATION: &str = "No explanation provided.";

fn recommendation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t*_#>\-]*recommendation[ \t*_]*:[ \t*_\[]*([a-z]*)").unwrap()
    })
}

fn size_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)position[ \t*_]+size[ \t*_]*:[^0-9\-\n]*(-?[0-9]+)").unwrap()
    })
}

fn size_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*_#>\-]*position[ \t*_]+size[ \t*_]*:.*$").unwrap())
}

fn explanation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*_#>\-]*explanation[ \t*_]*:[ \t*_]*").unwrap())
}

/// Extracts a [`TradingDecision`] from free-form model output.
///
/// Labels match case-insensitively and may be wrapped in markdown
/// emphasis. Every input yields a valid decision; irregularities are
/// reported as [`ParseEvent`]s.
pub fn parse_decision(text: &str) -> ParsedDecision {
    let mut events = Vec::new();

    let rec = recommendation_re().captures(text);
    let action = rec.as_ref().and_then(|c| {
        let word = c.get(1).unwrap();
        // "[BUY/SELL/HOLD]" is the template echoed back, not a choice.
        if text[word.end()..].starts_with('/') {
            return None;
        }
        match c.get(1).unwrap().as_str().to_ascii_uppercase().as_str() {
            "BUY" => Some(Action::Buy),
            "SELL" => Some(Action::Sell),
            "HOLD" => Some(Action::Hold),
            _ => None,
        }
    });
    let Some(action) = action else {
        events.push(ParseEvent::NoRecommendation);
        let explanation = if text.trim().is_empty() {
            NO_EXPLANATION.to_string()
        } else {
            text.trim().to_string()
        };
        return ParsedDecision {
            decision: TradingDecision::hold(explanation),
            events,
        };
    };
    let rec_end = rec.unwrap().get(0).unwrap().end();

    let raw_size = size_re()
        .captures(text)
        .and_then(|c| c.get(1).unwrap().as_str().parse::<i64>().ok());
    let position_size = match (action, raw_size) {
        (Action::Hold, None | Some(0)) => 0,
        (Action::Hold, Some(raw)) => {
            events.push(ParseEvent::HoldWithNonzeroSize { raw });
            0
        }
        (_, None) => {
            events.push(ParseEvent::SizeMissing);
            1
        }
        (_, Some(raw)) => {
            let clamped = raw.clamp(1, i64::from(TradingDecision::MAX_SIZE)) as u8;
            if i64::from(clamped) != raw {
                events.push(ParseEvent::SizeOutOfRange { raw, clamped });
            }
            clamped
        }
    };

    let explanation = match explanation_re().find(text) {
        Some(m) => text[m.end()..].trim().to_string(),
        None => {
            // Everything after the recommendation and size lines.
            let mut rest = text[rec_end..].to_string();
            if let Some(line) = size_label_re().find(&rest) {
                rest.replace_range(line.range(), "");
            }
            rest.trim().to_string()
        }
    };
    let explanation = if explanation.is_empty() {
        events.push(ParseEvent::EmptyExplanation);
        NO_EXPLANATION.to_string()
    } else {
        explanation
    };

    ParsedDecision {
        decision: TradingDecision {
            action,
            position_size,
            explanation,
        },
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_hold() {
        let p = parse_decision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.");
        assert_eq!(p.decision, TradingDecision::hold("wait."));
        assert!(p.is_clean());
    }

    #[test]
    fn sell_with_percent_suffix_and_bold_labels() {
        let text = "**Recommendation:** SELL  \n**Position Size:** 3% of portfolio\n\n\
                    **Explanation:**\n\nLock in gains.";
        let p = parse_decision(text);
        assert_eq!(p.decision.action, Action::Sell);
        assert_eq!(p.decision.position_size, 3);
        assert_eq!(p.decision.explanation, "Lock in gains.");
        assert!(p.is_clean());
    }

    #[test]
    fn lowercase_labels() {
        let p = parse_decision("recommendation: buy\nposition size: 7\nexplanation: trend");
        assert_eq!(p.decision.action, Action::Buy);
        assert_eq!(p.decision.position_size, 7);
    }

    #[test]
    fn unstructured_text_falls_back_to_hold() {
        let p = parse_decision("buy buy buy!!!");
        assert_eq!(p.decision.action, Action::Hold);
        assert_eq!(p.decision.position_size, 0);
        assert_eq!(p.events, vec![ParseEvent::NoRecommendation]);
        assert!(p.decision.is_valid());

        let p = parse_decision("");
        assert_eq!(p.events, vec![ParseEvent::NoRecommendation]);
        assert!(p.decision.is_valid());

        // Template echoed back verbatim.
        let p = parse_decision("Recommendation: [BUY/SELL/HOLD]\nPosition Size: [1-10]");
        assert_eq!(p.events, vec![ParseEvent::NoRecommendation]);
    }

    #[test]
    fn size_fixups() {
        let p = parse_decision("Recommendation: BUY\nPosition Size: 25\nExplanation: x");
        assert_eq!(p.decision.position_size, 10);
        assert_eq!(
            p.events,
            vec![ParseEvent::SizeOutOfRange { raw: 25, clamped: 10 }]
        );

        let p = parse_decision("Recommendation: SELL\nPosition Size: 0\nExplanation: x");
        assert_eq!(p.decision.position_size, 1);

        let p = parse_decision("Recommendation: HOLD\nPosition Size: 4\nExplanation: x");
        assert_eq!(p.decision.position_size, 0);
        assert_eq!(p.events, vec![ParseEvent::HoldWithNonzeroSize { raw: 4 }]);

        let p = parse_decision("Recommendation: BUY\nExplanation: x");
        assert_eq!(p.decision.position_size, 1);
        assert_eq!(p.events, vec![ParseEvent::SizeMissing]);
    }

    #[test]
    fn explanation_without_label_uses_remaining_text() {
        let p = parse_decision("Recommendation: BUY\nPosition Size: 5\nStrong uptrend.");
        assert_eq!(p.decision.explanation, "Strong uptrend.");
        let p = parse_decision("Recommendation: HOLD");
        assert_eq!(p.decision.explanation, NO_EXPLANATION);
        assert_eq!(p.events, vec![ParseEvent::EmptyExplanation]);
    }

    fn decision_strategy() -> impl Strategy<Value = TradingDecision> {
        let action = prop_oneof![Just(Action::Buy), Just(Action::Sell), Just(Action::Hold)];
        (action, 1u8..=10, "[A-Za-z0-9][A-Za-z0-9 .,%$\n:-]{0,80}[A-Za-z0-9.]")
            .prop_map(|(action, size, explanation)| TradingDecision {
                action,
                position_size: if action == Action::Hold { 0 } else { size },
                explanation,
            })
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(d in decision_strategy()) {
            let p = parse_decision(&d.format());
            prop_assert_eq!(&p.decision, &d);
            prop_assert!(p.is_clean());
        }

        #[test]
        fn any_text_yields_valid_decision(s in "\\PC{0,200}") {
            prop_assert!(parse_decision(&s).decision.is_valid());
        }
    }
}
