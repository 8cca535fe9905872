//! Prompt rendering, agent invocation and decision parsing.

mod decision;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::gateway::{cache_key, ChatBackend, ChatRequest, Message, Part};

pub use decision::{parse_decision, Action, ParseEvent, ParsedDecision, TradingDecision};
pub use prompt::{placeholders, render_prompt, render_template, PromptContext, PromptValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("prompt placeholder {{{0}}} has no value")]
    MissingPlaceholder(String),
    #[error("placeholder {{{0}}} has a numeric format but a text value")]
    NotNumeric(String),
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("{0} is a text-only role and takes no image attachments")]
    AttachmentsNotAllowed(AgentRole),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Summarizer,
    TechnicalAnalyst,
    ReflectionPerformanceShort,
    ReflectionPerformanceMedium,
    ReflectionVisual,
    Decision,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::Summarizer,
        AgentRole::TechnicalAnalyst,
        AgentRole::ReflectionPerformanceShort,
        AgentRole::ReflectionPerformanceMedium,
        AgentRole::ReflectionVisual,
        AgentRole::Decision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Summarizer => "summarizer",
            AgentRole::TechnicalAnalyst => "technical_analyst",
            AgentRole::ReflectionPerformanceShort => "reflection_performance_short",
            AgentRole::ReflectionPerformanceMedium => "reflection_performance_medium",
            AgentRole::ReflectionVisual => "reflection_visual",
            AgentRole::Decision => "decision",
        }
    }

    pub fn template(self) -> &'static str {
        let raw = match self {
            AgentRole::Summarizer => include_str!("../../prompts/summarizer.txt"),
            AgentRole::TechnicalAnalyst => include_str!("../../prompts/technical_analyst.txt"),
            AgentRole::ReflectionPerformanceShort | AgentRole::ReflectionPerformanceMedium => {
                include_str!("../../prompts/reflection_performance.txt")
            }
            AgentRole::ReflectionVisual => include_str!("../../prompts/reflection_visual.txt"),
            AgentRole::Decision => include_str!("../../prompts/decision.txt"),
        };
        raw.trim_end_matches('\n')
    }

    /// Roles that look at a chart image.
    pub fn takes_images(self) -> bool {
        matches!(self, AgentRole::TechnicalAnalyst | AgentRole::ReflectionVisual)
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSettings {
    pub model: String,
    pub temperature: f64,
}

/// Model and temperature per role. Roles missing from a config file keep
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentSettings {
    roles: BTreeMap<AgentRole, RoleSettings>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        let roles = AgentRole::ALL
            .into_iter()
            .map(|r| {
                let s = if r == AgentRole::Decision {
                    RoleSettings {
                        model: "o1-mini".into(),
                        temperature: 1.0,
                    }
                } else {
                    RoleSettings {
                        model: "gpt-4o-mini".into(),
                        temperature: 0.3,
                    }
                };
                (r, s)
            })
            .collect();
        Self { roles }
    }
}

impl AgentSettings {
    pub fn get(&self, role: AgentRole) -> &RoleSettings {
        &self.roles[&role]
    }

    pub fn set(&mut self, role: AgentRole, settings: RoleSettings) {
        self.roles.insert(role, settings);
    }

    /// Fills in defaults for roles not given explicitly.
    pub fn complete(mut self) -> Self {
        for (role, s) in AgentSettings::default().roles {
            self.roles.entry(role).or_insert(s);
        }
        self
    }
}

/// One request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub date: NaiveDate,
    pub role: AgentRole,
    pub request_digest: String,
    pub response: String,
}

/// The analysis outputs feeding one decision.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutputs {
    pub news_summary: String,
    pub technical_analysis: String,
    pub reflection_short: String,
    pub reflection_medium: String,
    pub signal_reflection: String,
}

/// Binds roles to a backend.
pub struct Agents<'a> {
    backend: &'a dyn ChatBackend,
    settings: &'a AgentSettings,
}

impl<'a> Agents<'a> {
    pub fn new(backend: &'a dyn ChatBackend, settings: &'a AgentSettings) -> Self {
        Self { backend, settings }
    }

    pub fn backend(&self) -> &'a dyn ChatBackend {
        self.backend
    }

    /// Builds the chat request for `role` without sending it.
    pub fn request(
        &self,
        role: AgentRole,
        ctx: &PromptContext,
        attachments: &[Vec<u8>],
    ) -> Result<ChatRequest> {
        if !attachments.is_empty() && !role.takes_images() {
            return Err(PromptError::AttachmentsNotAllowed(role).into());
        }
        let text = render_prompt(role, ctx)?;
        let mut parts = vec![Part::Text(text)];
        parts.extend(attachments.iter().map(|a| Part::png(a.clone())));
        let s = self.settings.get(role);
        let req = ChatRequest {
            model: s.model.clone(),
            temperature: s.temperature,
            messages: vec![Message::user(parts)],
        };
        req.validate()?;
        Ok(req)
    }

    /// Sends the rendered prompt and returns the raw assistant text with
    /// its run-log record.
    pub fn invoke(
        &self,
        role: AgentRole,
        date: NaiveDate,
        ctx: &PromptContext,
        attachments: &[Vec<u8>],
    ) -> Result<(String, RunLogEntry)> {
        let req = self.request(role, ctx, attachments)?;
        let resp = self.backend.complete(&req).map_err(|source| Error::Agent {
            role: role.to_string(),
            date: date.to_string(),
            source,
        })?;
        let entry = RunLogEntry {
            date,
            role,
            request_digest: cache_key(&req),
            response: resp.text.clone(),
        };
        Ok((resp.text, entry))
    }
}
