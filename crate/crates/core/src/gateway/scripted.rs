use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError};

/// One canned response. `match`, when present, must occur in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub response: String,
}

#[derive(Debug, Default)]
struct Cursor {
    consumed: Vec<bool>,
    calls: u64,
}

/// Replays script entries in file order. Each call takes the first
/// unconsumed entry whose `match` (if any) is a substring of the prompt.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cursor: Mutex<Cursor>,
}

#[derive(Serialize, Deserialize)]
struct SavedCursor {
    consumed: Vec<usize>,
    calls: u64,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let cursor = Cursor {
            consumed: vec![false; entries.len()],
            calls: 0,
        };
        Self {
            entries,
            cursor: Mutex::new(cursor),
        }
    }

    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            responses
                .into_iter()
                .map(|r| ScriptEntry {
                    pattern: None,
                    response: r.into(),
                })
                .collect(),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Config(format!("script line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.cursor
            .lock()
            .unwrap()
            .consumed
            .iter()
            .filter(|c| !**c)
            .count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let prompt = request.prompt_text();
        let mut cursor = self.cursor.lock().unwrap();
        cursor.calls += 1;
        let pick = self.entries.iter().enumerate().position(|(i, e)| {
            !cursor.consumed[i] && e.pattern.as_deref().is_none_or(|m| prompt.contains(m))
        });
        let Some(idx) = pick else {
            return Err(GatewayError::ScriptExhausted { call: cursor.calls });
        };
        cursor.consumed[idx] = true;
        Ok(ChatResponse {
            text: self.entries[idx].response.clone(),
            prompt_tokens: 0,
            completion_tokens: 0,
            backend_id: self.id(),
        })
    }

    fn order_sensitive(&self) -> bool {
        true
    }

    fn save_state(&self) -> Option<serde_json::Value> {
        let cursor = self.cursor.lock().unwrap();
        let saved = SavedCursor {
            consumed: (0..cursor.consumed.len())
                .filter(|i| cursor.consumed[*i])
                .collect(),
            calls: cursor.calls,
        };
        Some(serde_json::to_value(saved).expect("cursor serializes"))
    }

    fn restore_state(&self, state: &serde_json::Value) -> Result<(), GatewayError> {
        let saved: SavedCursor = serde_json::from_value(state.clone())
            .map_err(|e| GatewayError::Config(format!("bad scripted state: {e}")))?;
        let mut cursor = self.cursor.lock().unwrap();
        cursor.consumed = vec![false; self.entries.len()];
        for i in saved.consumed {
            let slot = cursor.consumed.get_mut(i).ok_or_else(|| {
                GatewayError::Config(format!("saved script position {i} beyond script end"))
            })?;
            *slot = true;
        }
        cursor.calls = saved.calls;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Message, Part};

    fn ask(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.3,
            messages: vec![Message::user(vec![Part::Text(text.into())])],
        }
    }

    #[test]
    fn replays_then_exhausts() {
        let b = ScriptedBackend::from_responses(["hello"]);
        assert_eq!(b.complete(&ask("x")).unwrap().text, "hello");
        assert_eq!(
            b.complete(&ask("x")),
            Err(GatewayError::ScriptExhausted { call: 2 })
        );
    }

    #[test]
    fn match_selects_first_fitting_entry() {
        let b = ScriptedBackend::parse(
            r#"{"match": "news", "response": "summary"}
{"match": "chart", "response": "analysis"}
{"response": "anything"}"#,
        )
        .unwrap();
        assert_eq!(b.complete(&ask("a chart")).unwrap().text, "analysis");
        assert_eq!(b.complete(&ask("some news")).unwrap().text, "summary");
        assert_eq!(b.complete(&ask("chart again")).unwrap().text, "anything");
        assert!(b.complete(&ask("x")).is_err());
    }

    #[test]
    fn state_round_trip() {
        let a = ScriptedBackend::from_responses(["1", "2", "3"]);
        a.complete(&ask("x")).unwrap();
        let saved = a.save_state().unwrap();
        let b = ScriptedBackend::from_responses(["1", "2", "3"]);
        b.restore_state(&saved).unwrap();
        assert_eq!(b.complete(&ask("x")).unwrap().text, "2");
        let short = ScriptedBackend::from_responses(Vec::<String>::new());
        assert!(short.restore_state(&saved).is_err());
    }

    #[test]
    fn bad_script_line() {
        assert!(matches!(
            ScriptedBackend::parse("{\"response\": 1}"),
            Err(GatewayError::Config(_))
        ));
    }
}
