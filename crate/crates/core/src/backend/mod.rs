//! Model-turn generation behind one chat-with-tool-calls interface.
//!
//! Two implementations: a deterministic scripted backend for hermetic tests
//! and an HTTP chat-completions backend for live providers. Both report token
//! usage through the same ledger, keyed by (session, role, turn), so cost
//! aggregation is backend-agnostic.

pub mod http;
pub mod scripted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sandbox::Role;

pub use http::{HttpBackend, HttpResponse, HttpTransport, UreqTransport};
pub use scripted::{Misbehavior, ScriptedBackend, ScriptedBehavior, ScriptedTurn, ToolCallSpec};

pub const DONE_MARKER: &str = "DONE";
/// Per-turn output budget in tokens.
pub const DEFAULT_OUTPUT_BUDGET: u64 = 8192;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    System,
    Assistant,
    User,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResultRecord {
    /// Id of the call this result answers.
    pub call_id: String,
    pub output: String,
    pub exit_status: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub author: Author,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result: Option<ToolResultRecord>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            author: Author::System,
            text: text.into(),
            tool_calls: Vec::new(),
            tool_result: None,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            author: Author::User,
            text: text.into(),
            tool_calls: Vec::new(),
            tool_result: None,
        }
    }

    pub fn assistant(text: impl Into<String>, tool_calls: Vec<ToolCallRecord>) -> Self {
        ChatMessage {
            author: Author::Assistant,
            text: text.into(),
            tool_calls,
            tool_result: None,
        }
    }

    pub fn tool_result(call_id: impl Into<String>, output: impl Into<String>, exit: i32) -> Self {
        let result = ToolResultRecord {
            call_id: call_id.into(),
            output: output.into(),
            exit_status: exit,
        };
        ChatMessage {
            author: Author::Tool,
            text: result.output.clone(),
            tool_calls: Vec::new(),
            tool_result: Some(result),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The turn carries tool calls (or plain text) and the loop continues.
    ToolCalls,
    /// The assistant text terminates with the done marker.
    DoneMarker,
    /// The per-turn output budget truncated the turn.
    Budget,
    /// Malformed tool emission; the raw text is preserved on the message.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTurn {
    pub message: ChatMessage,
    pub usage: Usage,
    pub stop: StopReason,
}

/// Backend identity, pricing, and turn limits for one role slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Family label, e.g. "A", "G", "O", or "mock".
    pub family: String,
    pub model: String,
    pub endpoint: String,
    /// Fixed at 0 for live runs.
    pub temperature: f64,
    pub price_in_per_million: f64,
    pub price_out_per_million: f64,
    pub output_budget: u64,
    pub max_retries: u32,
}

impl BackendConfig {
    pub fn mock() -> Self {
        BackendConfig {
            family: "mock".to_string(),
            model: "scripted".to_string(),
            endpoint: String::new(),
            temperature: 0.0,
            price_in_per_million: 0.0,
            price_out_per_million: 0.0,
            output_budget: DEFAULT_OUTPUT_BUDGET,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn cost_usd(&self, usage: Usage) -> f64 {
        usage.input_tokens as f64 * self.price_in_per_million / 1e6
            + usage.output_tokens as f64 * self.price_out_per_million / 1e6
    }
}

/// One per-turn usage entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub session_id: String,
    pub role: Role,
    pub turn_index: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
}

/// Usage ledger with deterministic merge by (session, role, turn) key; later
/// writes win, so re-ingesting the same records is idempotent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UsageLedger {
    records: BTreeMap<(String, Role, u32), UsageRecord>,
}

impl UsageLedger {
    pub fn record(&mut self, record: UsageRecord) {
        self.records.insert(
            (record.session_id.clone(), record.role, record.turn_index),
            record,
        );
    }

    pub fn merge(&mut self, other: &UsageLedger) {
        for record in other.records.values() {
            self.record(record.clone());
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &UsageRecord> {
        self.records.values()
    }

    pub fn total_cost(&self) -> f64 {
        cost_of(self.records())
    }

    pub fn session_cost(&self, session_id: &str) -> f64 {
        cost_of(self.records().filter(|r| r.session_id == session_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Linear cost aggregation over usage records.
pub fn cost_of<'a>(records: impl IntoIterator<Item = &'a UsageRecord>) -> f64 {
    records.into_iter().map(|r| r.cost_usd).sum()
}

/// Pass rate divided by total cost; `None` when cost is zero.
pub fn pass_per_dollar(pass_rate: f64, total_cost_usd: f64) -> Option<f64> {
    if total_cost_usd > 0.0 {
        Some(pass_rate / total_cost_usd)
    } else {
        None
    }
}

/// Tool description handed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

/// The unified four-tool interface.
pub fn default_tool_schemas() -> Vec<ToolSchema> {
    let object = |props: Value, required: &[&str]| {
        serde_json::json!({
            "type": "object",
            "properties": props,
            "required": required,
        })
    };
    vec![
        ToolSchema {
            name: "read".to_string(),
            description: "Read file contents from allowed directories".to_string(),
            parameters: object(serde_json::json!({"path": {"type": "string"}}), &["path"]),
        },
        ToolSchema {
            name: "write".to_string(),
            description: "Write to a file in allowed directories".to_string(),
            parameters: object(
                serde_json::json!({"path": {"type": "string"}, "content": {"type": "string"}}),
                &["path", "content"],
            ),
        },
        ToolSchema {
            name: "run".to_string(),
            description: "Execute a shell command in the workspace".to_string(),
            parameters: object(
                serde_json::json!({"command": {"type": "string"}}),
                &["command"],
            ),
        },
        ToolSchema {
            name: "send_message".to_string(),
            description: "Send a message to another role".to_string(),
            parameters: object(
                serde_json::json!({"to": {"type": "string"}, "content": {"type": "string"}}),
                &["to", "content"],
            ),
        },
    ]
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Retries exhausted on a retryable transport status, or a hard transport
    /// failure. Counted as a run failure by the runner.
    #[error("infrastructure failure: {0}")]
    Infrastructure(String),
}

/// A chat backend that produces one assistant turn per call.
pub trait Backend {
    fn next_turn(
        &mut self,
        history: &[ChatMessage],
        tools: &[ToolSchema],
    ) -> Result<ModelTurn, BackendError>;

    fn config(&self) -> &BackendConfig;
}

/// Deterministic token estimate used by the scripted backend: one token per
/// four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    estimate_tokens_len(text.chars().count())
}

pub fn estimate_tokens_len(chars: usize) -> u64 {
    (chars as u64).div_ceil(4)
}

/// True iff the final non-blank line of `text` equals the done marker.
pub fn ends_with_done_marker(text: &str) -> bool {
    text.lines()
        .rev()
        .find(|line| !line.trim().is_empty())
        .map(|line| line.trim() == DONE_MARKER)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_is_linear_in_usage() {
        let cfg = BackendConfig {
            price_in_per_million: 3.0,
            price_out_per_million: 15.0,
            ..BackendConfig::mock()
        };
        let c = cfg.cost_usd(Usage {
            input_tokens: 1_000_000,
            output_tokens: 0,
        });
        assert!((c - 3.0).abs() < 1e-12);
        assert_eq!(cfg.cost_usd(Usage::default()), 0.0);
    }

    #[test]
    fn pass_per_dollar_matches_reference_value() {
        let v = pass_per_dollar(0.187, 2.09).unwrap();
        assert!((v - 0.089).abs() < 0.001, "{v}");
        assert_eq!(pass_per_dollar(0.5, 0.0), None);
    }

    #[test]
    fn ledger_merge_is_idempotent_by_key() {
        let mut a = UsageLedger::default();
        let record = UsageRecord {
            session_id: "s1".to_string(),
            role: Role::Planner,
            turn_index: 0,
            input_tokens: 10,
            output_tokens: 5,
            cost_usd: 0.01,
        };
        a.record(record.clone());
        a.record(record.clone());
        assert_eq!(a.len(), 1);
        let mut b = UsageLedger::default();
        b.merge(&a);
        b.merge(&a);
        assert!((b.total_cost() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn done_marker_must_terminate() {
        assert!(ends_with_done_marker("all set\nDONE"));
        assert!(ends_with_done_marker("all set\nDONE\n\n"));
        assert!(!ends_with_done_marker("DONE and then more"));
        assert!(!ends_with_done_marker("nothing here"));
        assert!(!ends_with_done_marker(""));
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abc"), 1);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
