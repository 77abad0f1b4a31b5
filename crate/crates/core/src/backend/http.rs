//! HTTP chat-completions backend.
//!
//! Transport is a trait so the request/retry/parse logic is testable without
//! sockets. Rate-limit and unavailable statuses (429, 500, 503) are retried
//! with exponential backoff up to `max_retries`, then surfaced as an
//! infrastructure failure, which the runner counts as a task failure.
//!
//! Lenient tool-call recovery handles exactly two malformed wrappers emitted
//! by smaller models:
//!   1. `<tool_call>{...}</tool_call>` around a JSON object
//!   2. a fenced ```json block containing a JSON object
//!
//! where the object carries `name`/`arguments` (or `tool`/`args`). Anything
//! else that looks like a tool call but does not parse becomes a no-op turn
//! with stop reason `error` and the raw text preserved.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    ends_with_done_marker, Author, Backend, BackendConfig, BackendError, ChatMessage, ModelTurn,
    StopReason, ToolCallRecord, ToolSchema, Usage,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait HttpTransport: Send {
    fn post_json(&mut self, url: &str, api_key: &str, body: &Value)
        -> Result<HttpResponse, String>;
}

/// Blocking transport over ureq.
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(
        &mut self,
        url: &str,
        api_key: &str,
        body: &Value,
    ) -> Result<HttpResponse, String> {
        let payload = body.to_string();
        let result = ureq::post(url)
            .header("authorization", &format!("Bearer {api_key}"))
            .header("content-type", "application/json")
            .send(payload.as_bytes());
        match result {
            Ok(mut response) => {
                let status = response.status().as_u16();
                let body = response
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| e.to_string())?;
                Ok(HttpResponse { status, body })
            }
            Err(ureq::Error::StatusCode(code)) => Ok(HttpResponse {
                status: code,
                body: String::new(),
            }),
            Err(e) => Err(e.to_string()),
        }
    }
}

pub struct HttpBackend<T: HttpTransport> {
    config: BackendConfig,
    transport: T,
    api_key: String,
    /// Base backoff; doubles per retry. Zero in tests.
    pub backoff: Duration,
}

impl<T: HttpTransport> HttpBackend<T> {
    pub fn new(config: BackendConfig, api_key: String, transport: T) -> Self {
        HttpBackend {
            config,
            transport,
            api_key,
            backoff: Duration::from_millis(500),
        }
    }

    fn render_messages(history: &[ChatMessage]) -> Vec<Value> {
        history
            .iter()
            .map(|m| match m.author {
                Author::System => json!({"role": "system", "content": m.text}),
                Author::User => json!({"role": "user", "content": m.text}),
                Author::Assistant => {
                    let mut rendered = json!({"role": "assistant", "content": m.text});
                    if !m.tool_calls.is_empty() {
                        rendered["tool_calls"] = Value::Array(
                            m.tool_calls
                                .iter()
                                .map(|c| {
                                    json!({
                                        "id": c.id,
                                        "type": "function",
                                        "function": {
                                            "name": c.name,
                                            "arguments": c.arguments.to_string(),
                                        },
                                    })
                                })
                                .collect(),
                        );
                    }
                    rendered
                }
                Author::Tool => {
                    let call_id = m
                        .tool_result
                        .as_ref()
                        .map(|r| r.call_id.clone())
                        .unwrap_or_default();
                    json!({"role": "tool", "tool_call_id": call_id, "content": m.text})
                }
            })
            .collect()
    }

    fn request_body(&self, history: &[ChatMessage], tools: &[ToolSchema]) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.output_budget,
            "messages": Self::render_messages(history),
            "tools": tools.iter().map(|t| json!({
                "type": "function",
                "function": {
                    "name": t.name,
                    "description": t.description,
                    "parameters": t.parameters,
                },
            })).collect::<Vec<_>>(),
        })
    }

    fn parse_turn(&self, body: &str) -> ModelTurn {
        let parsed: Value = match serde_json::from_str(body) {
            Ok(v) => v,
            Err(e) => {
                return no_op_turn(format!("unparseable response body: {e}"), body.to_string())
            }
        };
        let message = &parsed["choices"][0]["message"];
        let text = message["content"].as_str().unwrap_or("").to_string();

        let usage = Usage {
            input_tokens: parsed["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: parsed["usage"]["completion_tokens"]
                .as_u64()
                .unwrap_or(0)
                .min(self.config.output_budget),
        };
        let budget_hit = parsed["usage"]["completion_tokens"]
            .as_u64()
            .map(|t| t >= self.config.output_budget)
            .unwrap_or(false)
            || parsed["choices"][0]["finish_reason"].as_str() == Some("length");

        let mut tool_calls = Vec::new();
        if let Some(raw_calls) = message["tool_calls"].as_array() {
            for (i, raw) in raw_calls.iter().enumerate() {
                let name = raw["function"]["name"].as_str();
                let arguments = raw["function"]["arguments"]
                    .as_str()
                    .and_then(|s| serde_json::from_str::<Value>(s).ok())
                    .or_else(|| {
                        raw["function"]["arguments"]
                            .as_object()
                            .map(|o| Value::Object(o.clone()))
                    });
                match (name, arguments) {
                    (Some(name), Some(arguments)) if arguments.is_object() => {
                        let id = raw["id"]
                            .as_str()
                            .map(str::to_string)
                            .unwrap_or_else(|| format!("call-{i}"));
                        tool_calls.push(ToolCallRecord {
                            id,
                            name: name.to_string(),
                            arguments,
                        });
                    }
                    _ => {
                        // Schema-invalid structured call: the whole turn is a no-op.
                        return no_op_turn_with_usage(
                            "schema-invalid tool call".to_string(),
                            text,
                            usage,
                        );
                    }
                }
            }
        }

        // Text-embedded tool-call recovery for models that skip the
        // structured field.
        if tool_calls.is_empty() && looks_like_tool_call(&text) {
            match recover_tool_call(&text) {
                Some((name, arguments)) => tool_calls.push(ToolCallRecord {
                    id: "call-recovered-0".to_string(),
                    name,
                    arguments,
                }),
                None => {
                    return no_op_turn_with_usage(
                        "malformed tool-call wrapper".to_string(),
                        text,
                        usage,
                    );
                }
            }
        }

        let stop = if budget_hit && tool_calls.is_empty() {
            StopReason::Budget
        } else if tool_calls.is_empty() && ends_with_done_marker(&text) {
            StopReason::DoneMarker
        } else {
            StopReason::ToolCalls
        };

        ModelTurn {
            message: ChatMessage {
                author: Author::Assistant,
                text,
                tool_calls,
                tool_result: None,
            },
            usage,
            stop,
        }
    }
}

fn no_op_turn(reason: String, raw: String) -> ModelTurn {
    no_op_turn_with_usage(reason, raw, Usage::default())
}

fn no_op_turn_with_usage(reason: String, raw: String, usage: Usage) -> ModelTurn {
    ModelTurn {
        message: ChatMessage {
            author: Author::Assistant,
            // Raw text preserved for the trace.
            text: raw,
            tool_calls: Vec::new(),
            tool_result: None,
        },
        usage,
        stop: StopReason::Error,
    }
    .tap_reason(reason)
}

trait TapReason {
    fn tap_reason(self, reason: String) -> Self;
}

impl TapReason for ModelTurn {
    fn tap_reason(mut self, reason: String) -> Self {
        if self.message.text.is_empty() {
            self.message.text = format!("[no-op: {reason}]");
        }
        self
    }
}

fn looks_like_tool_call(text: &str) -> bool {
    text.contains("<tool_call>") || text.contains("```json")
}

/// The closed, documented recovery set: `<tool_call>` wrappers and fenced
/// ```json blocks. Returns the call when the inner object parses and names a
/// tool; None otherwise.
fn recover_tool_call(text: &str) -> Option<(String, Value)> {
    let inner = extract_between(text, "<tool_call>", "</tool_call>")
        .or_else(|| extract_between(text, "```json", "```"))?;
    let value: Value = serde_json::from_str(inner.trim()).ok()?;
    let name = value
        .get("name")
        .or_else(|| value.get("tool"))?
        .as_str()?
        .to_string();
    let arguments = value
        .get("arguments")
        .or_else(|| value.get("args"))
        .cloned()
        .unwrap_or_else(|| json!({}));
    if !arguments.is_object() {
        return None;
    }
    Some((name, arguments))
}

fn extract_between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(&text[start..end])
}

fn is_retryable(status: u16) -> bool {
    matches!(status, 429 | 500 | 503)
}

impl<T: HttpTransport> Backend for HttpBackend<T> {
    fn next_turn(
        &mut self,
        history: &[ChatMessage],
        tools: &[ToolSchema],
    ) -> Result<ModelTurn, BackendError> {
        let body = self.request_body(history, tools);
        let mut attempt = 0u32;
        loop {
            let response = self
                .transport
                .post_json(&self.config.endpoint, &self.api_key, &body);
            match response {
                Ok(response) if response.status == 200 => {
                    return Ok(self.parse_turn(&response.body));
                }
                Ok(response) if is_retryable(response.status) => {
                    if attempt >= self.config.max_retries {
                        return Err(BackendError::Infrastructure(format!(
                            "status {} after {} retries",
                            response.status, attempt
                        )));
                    }
                    if !self.backoff.is_zero() {
                        thread::sleep(self.backoff * 2u32.pow(attempt));
                    }
                    attempt += 1;
                }
                Ok(response) => {
                    return Err(BackendError::Infrastructure(format!(
                        "status {}: {}",
                        response.status,
                        response.body.chars().take(200).collect::<String>()
                    )));
                }
                Err(e) => {
                    return Err(BackendError::Infrastructure(format!("transport: {e}")));
                }
            }
        }
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }
}
