use std::collections::BTreeMap;

use super::{AgentRole, PromptError};

#[derive(Debug, Clone, PartialEq)]
pub enum PromptValue {
    Text(String),
    Number(f64),
}

impl From<&str> for PromptValue {
    fn from(v: &str) -> Self {
        PromptValue::Text(v.to_string())
    }
}

impl From<String> for PromptValue {
    fn from(v: String) -> Self {
        PromptValue::Text(v)
    }
}

impl From<f64> for PromptValue {
    fn from(v: f64) -> Self {
        PromptValue::Number(v)
    }
}

impl From<usize> for PromptValue {
    fn from(v: usize) -> Self {
        PromptValue::Text(v.to_string())
    }
}

/// Placeholder values for one prompt. Keys the template does not use are
/// ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    values: BTreeMap<String, PromptValue>,
}

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<PromptValue>) -> &mut Self {
        self.values.insert(key.to_string(), value.into());
        self
    }

    pub fn with(mut self, key: &str, value: impl Into<PromptValue>) -> Self {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&PromptValue> {
        self.values.get(key)
    }
}

fn format_value(name: &str, value: &PromptValue, spec: Option<&str>) -> Result<String, PromptError> {
    match (value, spec) {
        (PromptValue::Text(t), None) => Ok(t.clone()),
        (PromptValue::Number(n), None) => Ok(n.to_string()),
        (PromptValue::Number(n), Some(spec)) => {
            let digits = spec
                .strip_prefix('.')
                .and_then(|s| s.strip_suffix('f'))
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| PromptError::BadTemplate(format!("format spec {spec:?} on {name}")))?;
            // Negative zero would render as "-0.00".
            let n = if *n == 0.0 { 0.0 } else { *n };
            Ok(format!("{n:.digits$}"))
        }
        (PromptValue::Text(_), Some(_)) => Err(PromptError::NotNumeric(name.to_string())),
    }
}

/// Substitutes `{name}` and `{name:.Nf}` placeholders.
pub fn render_template(template: &str, ctx: &PromptContext) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| PromptError::BadTemplate("unterminated placeholder".into()))?;
        let inner = &after[..close];
        let (name, spec) = match inner.split_once(':') {
            Some((n, s)) => (n, Some(s)),
            None => (inner, None),
        };
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(PromptError::BadTemplate(format!("placeholder {{{inner}}}")));
        }
        let value = ctx
            .get(name)
            .ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&format_value(name, value, spec)?);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Names of the placeholders a template uses, in order of first use.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut names: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let name = after[..close].split(':').next().unwrap_or_default();
        if !names.contains(&name) {
            names.push(name);
        }
        rest = &after[close + 1..];
    }
    names
}

pub fn render_prompt(role: AgentRole, ctx: &PromptContext) -> Result<String, PromptError> {
    render_template(role.template(), ctx)
}
