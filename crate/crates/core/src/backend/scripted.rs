//! Deterministic scripted backend for hermetic tests.
//!
//! A script is an ordered list of canned turns for one role. Replay is
//! deterministic; exhausting the script yields a done-marker turn. Misbehavior
//! flags synthesize the event patterns the failure-taxonomy tests need, and
//! the edit-attempt flag reacts to tool results so enforcement visibly changes
//! how many attempts land.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ends_with_done_marker, estimate_tokens_len, Author, Backend, BackendConfig, BackendError,
    ChatMessage, ModelTurn, StopReason, ToolCallRecord, ToolSchema, Usage, DONE_MARKER,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallSpec {
    pub name: String,
    pub arguments: Value,
}

impl ToolCallSpec {
    pub fn read(path: &str) -> Self {
        ToolCallSpec {
            name: "read".to_string(),
            arguments: serde_json::json!({ "path": path }),
        }
    }

    pub fn write(path: &str, content: &str) -> Self {
        ToolCallSpec {
            name: "write".to_string(),
            arguments: serde_json::json!({ "path": path, "content": content }),
        }
    }

    pub fn run(command: &str) -> Self {
        ToolCallSpec {
            name: "run".to_string(),
            arguments: serde_json::json!({ "command": command }),
        }
    }

    pub fn send_message(to: &str, content: &str) -> Self {
        ToolCallSpec {
            name: "send_message".to_string(),
            arguments: serde_json::json!({ "to": to, "content": content }),
        }
    }
}

/// One canned assistant turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallSpec>,
}

impl ScriptedTurn {
    pub fn say(text: &str) -> Self {
        ScriptedTurn {
            text: text.to_string(),
            tool_calls: Vec::new(),
        }
    }

    pub fn call(call: ToolCallSpec) -> Self {
        ScriptedTurn {
            text: String::new(),
            tool_calls: vec![call],
        }
    }

    pub fn done() -> Self {
        ScriptedTurn::say(DONE_MARKER)
    }
}

/// Synthesized misbehavior patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Misbehavior {
    /// The role attempts workspace edits before its scripted turns. If an
    /// attempt is denied it gives up after that one attempt; if attempts land
    /// it keeps editing until `attempts_if_allowed` writes were issued.
    VerifierAttemptsEdit {
        path: String,
        content: String,
        attempts_if_allowed: u32,
    },
}

/// A deterministic script for one role slot, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    pub turns: Vec<ScriptedTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misbehavior: Option<Misbehavior>,
}

impl ScriptedBehavior {
    pub fn new(turns: Vec<ScriptedTurn>) -> Self {
        ScriptedBehavior {
            turns,
            misbehavior: None,
        }
    }

    pub fn with_misbehavior(mut self, misbehavior: Misbehavior) -> Self {
        self.misbehavior = Some(misbehavior);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// An approval with no evidence read: attest pass immediately, then done.
    pub fn optimistic_approver(task_id: &str, seed: u64) -> Self {
        ScriptedBehavior::new(vec![
            ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation_json(task_id, seed, "pass", &[], &[]),
            )),
            ScriptedTurn::done(),
        ])
    }

    /// An approval that quotes the executor's completion claim instead of
    /// checking it against the requirements.
    pub fn echo_approver(task_id: &str, seed: u64, executor_claim: &str) -> Self {
        ScriptedBehavior::new(vec![
            ScriptedTurn::call(ToolCallSpec::read("messages")),
            ScriptedTurn {
                text: format!("The Executor reports: \"{executor_claim}\". Accepting that."),
                tool_calls: vec![ToolCallSpec::write(
                    "attestation.json",
                    &attestation_json(task_id, seed, "pass", &["executor claim"], &[]),
                )],
            },
            ScriptedTurn::done(),
        ])
    }
}

/// Serialize an attestation body with the schema the harness parses back.
pub fn attestation_json(
    task_id: &str,
    seed: u64,
    verdict: &str,
    checked_requirements: &[&str],
    evidence_refs: &[&str],
) -> String {
    let body = serde_json::json!({
        "task_id": task_id,
        "seed": seed,
        "verdict": verdict,
        "checked_requirements": checked_requirements,
        "evidence_refs": evidence_refs,
        "author_role": "verifier",
        "timestamp": "1970-01-01T00:00:00Z",
    });
    let mut text = serde_json::to_string_pretty(&body).expect("attestation serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EditPhase {
    Pending,
    Probing { issued: u32 },
    Finished,
}

pub struct ScriptedBackend {
    config: BackendConfig,
    behavior: ScriptedBehavior,
    cursor: usize,
    call_counter: u32,
    edit_phase: EditPhase,
}

impl ScriptedBackend {
    pub fn new(behavior: ScriptedBehavior) -> Self {
        let edit_phase = if behavior.misbehavior.is_some() {
            EditPhase::Pending
        } else {
            EditPhase::Finished
        };
        ScriptedBackend {
            config: BackendConfig::mock(),
            behavior,
            cursor: 0,
            call_counter: 0,
            edit_phase,
        }
    }

    pub fn with_config(mut self, config: BackendConfig) -> Self {
        self.config = config;
        self
    }

    fn next_call_id(&mut self) -> String {
        self.call_counter += 1;
        format!("call-{:04}", self.call_counter)
    }

    fn turn_from(
        &mut self,
        text: String,
        specs: &[ToolCallSpec],
        history_chars: usize,
    ) -> ModelTurn {
        let tool_calls: Vec<ToolCallRecord> = specs
            .iter()
            .map(|spec| ToolCallRecord {
                id: self.next_call_id(),
                name: spec.name.clone(),
                arguments: spec.arguments.clone(),
            })
            .collect();
        let stop = if tool_calls.is_empty() && ends_with_done_marker(&text) {
            StopReason::DoneMarker
        } else {
            StopReason::ToolCalls
        };
        let rendered_len = text.chars().count()
            + tool_calls
                .iter()
                .map(|c| c.name.len() + c.arguments.to_string().len())
                .sum::<usize>();
        let output_tokens = estimate_tokens_len(rendered_len).min(self.config.output_budget);
        ModelTurn {
            message: ChatMessage {
                author: Author::Assistant,
                text,
                tool_calls,
                tool_result: None,
            },
            usage: Usage {
                input_tokens: estimate_tokens_len(history_chars),
                output_tokens,
            },
            stop,
        }
    }

    /// Whether the last tool result in the history reports a denial.
    fn last_result_denied(history: &[ChatMessage]) -> bool {
        history
            .iter()
            .rev()
            .find_map(|m| m.tool_result.as_ref())
            .map(|r| r.exit_status != 0)
            .unwrap_or(false)
    }
}

impl Backend for ScriptedBackend {
    fn next_turn(
        &mut self,
        history: &[ChatMessage],
        _tools: &[ToolSchema],
    ) -> Result<ModelTurn, BackendError> {
        let history_chars: usize = history.iter().map(|m| m.text.chars().count()).sum();

        if let Some(Misbehavior::VerifierAttemptsEdit {
            path,
            content,
            attempts_if_allowed,
        }) = self.behavior.misbehavior.clone()
        {
            match self.edit_phase {
                EditPhase::Pending => {
                    self.edit_phase = EditPhase::Probing { issued: 1 };
                    let spec = ToolCallSpec::write(&path, &content);
                    return Ok(self.turn_from(
                        "Tightening the implementation before attesting.".to_string(),
                        &[spec],
                        history_chars,
                    ));
                }
                EditPhase::Probing { issued } => {
                    if Self::last_result_denied(history) || issued >= attempts_if_allowed {
                        self.edit_phase = EditPhase::Finished;
                    } else {
                        self.edit_phase = EditPhase::Probing { issued: issued + 1 };
                        let spec = ToolCallSpec::write(&path, &content);
                        return Ok(self.turn_from(
                            "Another pass over the same file.".to_string(),
                            &[spec],
                            history_chars,
                        ));
                    }
                }
                EditPhase::Finished => {}
            }
        }

        let turn = match self.behavior.turns.get(self.cursor) {
            Some(scripted) => {
                let scripted = scripted.clone();
                self.cursor += 1;
                self.turn_from(scripted.text, &scripted.tool_calls, history_chars)
            }
            // Script exhaustion yields a done-marker turn.
            None => self.turn_from(DONE_MARKER.to_string(), &[], history_chars),
        };
        Ok(turn)
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_turns_verbatim_then_done() {
        let behavior = ScriptedBehavior::new(vec![
            ScriptedTurn::call(ToolCallSpec::read("spec.md")),
            ScriptedTurn::say("thinking"),
        ]);
        let mut backend = ScriptedBackend::new(behavior);
        let t0 = backend.next_turn(&[], &[]).unwrap();
        assert_eq!(t0.message.tool_calls.len(), 1);
        assert_eq!(t0.message.tool_calls[0].name, "read");
        assert_eq!(t0.stop, StopReason::ToolCalls);
        let t1 = backend.next_turn(&[], &[]).unwrap();
        assert_eq!(t1.message.text, "thinking");
        let t2 = backend.next_turn(&[], &[]).unwrap();
        assert_eq!(t2.stop, StopReason::DoneMarker);
        assert_eq!(t2.message.text, DONE_MARKER);
    }

    #[test]
    fn replay_is_deterministic() {
        let behavior = ScriptedBehavior::new(vec![
            ScriptedTurn::call(ToolCallSpec::write("workspace/a", "x")),
            ScriptedTurn::done(),
        ]);
        let run = |behavior: ScriptedBehavior| {
            let mut backend = ScriptedBackend::new(behavior);
            (0..3)
                .map(|_| backend.next_turn(&[], &[]).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(behavior.clone()), run(behavior));
    }

    #[test]
    fn edit_misbehavior_gives_up_on_denial() {
        let behavior = ScriptedBehavior::new(vec![ScriptedTurn::done()]).with_misbehavior(
            Misbehavior::VerifierAttemptsEdit {
                path: "workspace/app.py".to_string(),
                content: "pwned".to_string(),
                attempts_if_allowed: 3,
            },
        );
        let mut backend = ScriptedBackend::new(behavior);
        let t0 = backend.next_turn(&[], &[]).unwrap();
        assert_eq!(t0.message.tool_calls[0].name, "write");
        // Denial reported back: next turn should fall through to the script.
        let denied = vec![ChatMessage::tool_result("call-0001", "denied", -1)];
        let t1 = backend.next_turn(&denied, &[]).unwrap();
        assert!(t1.message.tool_calls.is_empty());
        assert_eq!(t1.stop, StopReason::DoneMarker);
    }

    #[test]
    fn edit_misbehavior_keeps_editing_when_allowed() {
        let behavior = ScriptedBehavior::new(vec![ScriptedTurn::done()]).with_misbehavior(
            Misbehavior::VerifierAttemptsEdit {
                path: "workspace/app.py".to_string(),
                content: "pwned".to_string(),
                attempts_if_allowed: 3,
            },
        );
        let mut backend = ScriptedBackend::new(behavior);
        let ok = vec![ChatMessage::tool_result("call-0001", "ok", 0)];
        let mut writes = 0;
        for _ in 0..6 {
            let t = backend.next_turn(&ok, &[]).unwrap();
            if t.message.tool_calls.iter().any(|c| c.name == "write") {
                writes += 1;
            } else {
                break;
            }
        }
        assert_eq!(writes, 3);
    }

    #[test]
    fn scripts_round_trip_through_json() {
        let behavior = ScriptedBehavior::new(vec![
            ScriptedTurn::call(ToolCallSpec::send_message("executor", "hello")),
            ScriptedTurn::done(),
        ])
        .with_misbehavior(Misbehavior::VerifierAttemptsEdit {
            path: "workspace/x".to_string(),
            content: "y".to_string(),
            attempts_if_allowed: 2,
        });
        let json = behavior.to_json();
        let parsed = ScriptedBehavior::from_json(&json).unwrap();
        assert_eq!(parsed, behavior);
    }
}
