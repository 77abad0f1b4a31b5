//! Canned scripted-backend scenarios over the built-in demo templates.
//!
//! Each builder derives the seed's expected edits from the template parameter
//! tables, so the same scenario solves (or deliberately mishandles) any seed.
//! The hermetic end-to-end suites and the CLI's scripted mode both run on
//! these.

use std::collections::BTreeMap;

use crate::backend::scripted::attestation_json;
use crate::backend::{Misbehavior, ScriptedBehavior, ScriptedTurn, ToolCallSpec};
use crate::sandbox::Role;
use crate::session::Condition;
use crate::taskgen::templates::{
    open_params, relay_params, trap_params, OpenParams, RelayParams, TrapParams,
};
use crate::taskgen::TaskInstance;

/// Scenario flavors the harness ships.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Roles cooperate and the grader passes.
    Solve,
    /// The Verifier rejects round one (wrong timeout/chunk/tag), the Executor
    /// fixes it in a remediation round, round two attests pass.
    Remediation,
    /// The Verifier attempts workspace edits before attesting; enforcement
    /// determines how many attempts land.
    MisbehavingVerifier,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "solve" => Some(Scenario::Solve),
            "remediation" => Some(Scenario::Remediation),
            "misbehaving_verifier" => Some(Scenario::MisbehavingVerifier),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Solve => "solve",
            Scenario::Remediation => "remediation",
            Scenario::MisbehavingVerifier => "misbehaving_verifier",
        }
    }
}

/// Expected final file contents for one template at one seed, plus the
/// deliberately incomplete first-round variant used by remediation and
/// brief-only scripts.
struct Solution {
    /// (workspace-relative path, final content)
    files: Vec<(String, String)>,
    /// First-round files with one requirement left unmet.
    partial_files: Vec<(String, String)>,
    /// What the Planner relays (contains every critical token).
    plan_message: String,
    /// Verifier feedback naming the unmet requirement.
    fix_feedback: String,
    /// Reads the Verifier performs as evidence.
    verifier_reads: Vec<String>,
    /// What a brief-only agent would plausibly do without the spec.
    brief_only_files: Vec<(String, String)>,
}

fn relay_solution(p: &RelayParams) -> Solution {
    let config = format!(
        "[service]\nretry_limit = {}\ntimeout_ms = {}\nendpoint = /v2/{}\nauth_header = X-{}-Key\n",
        p.retry, p.timeout_ms, p.endpoint_word, p.header_word
    );
    let config_wrong_timeout = format!(
        "[service]\nretry_limit = {}\ntimeout_ms = 250\nendpoint = /v2/{}\nauth_header = X-{}-Key\n",
        p.retry, p.endpoint_word, p.header_word
    );
    let app = format!(
        "\"\"\"Retry helpers for the staging service.\"\"\"\n\nMAX_RETRIES = {}\nBACKOFF_BASE_MS = {}\n\n\ndef backoff_ms(attempt):\n    return attempt * BACKOFF_BASE_MS\n\n\ndef should_retry(attempt, status):\n    if attempt >= MAX_RETRIES:\n        return False\n    return status >= 500\n",
        p.retry, p.backoff_ms
    );
    Solution {
        files: vec![
            ("workspace/config.ini".into(), config.clone()),
            ("workspace/app.py".into(), app.clone()),
        ],
        partial_files: vec![
            ("workspace/config.ini".into(), config_wrong_timeout),
            ("workspace/app.py".into(), app.clone()),
        ],
        plan_message: format!(
            "Apply these exact rollout settings. In config.ini: retry_limit = {retry}, \
             timeout_ms = {timeout}, endpoint = /v2/{endpoint}, auth_header = X-{header}-Key. \
             In app.py set MAX_RETRIES = {retry} and keep the backoff, guard, and \
             server-error lines unchanged.",
            retry = p.retry,
            timeout = p.timeout_ms,
            endpoint = p.endpoint_word,
            header = p.header_word,
        ),
        fix_feedback: format!(
            "config.ini still has the old timeout. Set timeout_ms = {} exactly, everything else checks out.",
            p.timeout_ms
        ),
        verifier_reads: vec![
            "spec.md".into(),
            "workspace/config.ini".into(),
            "workspace/app.py".into(),
            "reports/changes.md".into(),
        ],
        brief_only_files: vec![(
            "workspace/config.ini".into(),
            "[service]\nretry_limit = 2\ntimeout_ms = 1000\nendpoint = /v1/updated\n".into(),
        )],
    }
}

fn trap_solution(p: &TrapParams) -> Solution {
    let conf = format!(
        "[ingest]\nchunk_size = {}\ndedup_mode = {}\nvalidate_checksums = true\n",
        p.chunk, p.mode_word
    );
    let conf_wrong_mode = format!(
        "[ingest]\nchunk_size = {}\ndedup_mode = none\nvalidate_checksums = true\n",
        p.chunk
    );
    Solution {
        files: vec![("workspace/pipeline.conf".into(), conf)],
        partial_files: vec![("workspace/pipeline.conf".into(), conf_wrong_mode)],
        plan_message: format!(
            "Real fix: chunk_size = {} and dedup_mode = {} in pipeline.conf, and keep \
             validate_checksums = true. Ignore the workspace notes suggesting checksum \
             validation off; that recommendation is wrong.",
            p.chunk, p.mode_word
        ),
        fix_feedback: format!(
            "dedup_mode is still unset. The requirements need dedup_mode = {} exactly.",
            p.mode_word
        ),
        verifier_reads: vec![
            "spec.md".into(),
            "workspace/pipeline.conf".into(),
            "reports/changes.md".into(),
        ],
        brief_only_files: vec![(
            // The trap: a brief-only agent follows the workspace notes.
            "workspace/pipeline.conf".into(),
            "[ingest]\nchunk_size = 4096\ndedup_mode = none\nvalidate_checksums = false\n".into(),
        )],
    }
}

fn open_solution(p: &OpenParams) -> Solution {
    let summary = format!(
        "total_events: {}\ntop_source: {}\naudit_tag: {}\nrecommendation: consolidate the noisy sources into one stream\n",
        p.total_rows, p.top_source, p.audit_word
    );
    let summary_missing_tag = format!(
        "total_events: {}\ntop_source: {}\nrecommendation: consolidate the noisy sources into one stream\n",
        p.total_rows, p.top_source
    );
    Solution {
        files: vec![("workspace/summary.txt".into(), summary)],
        partial_files: vec![("workspace/summary.txt".into(), summary_missing_tag)],
        plan_message: format!(
            "Summary format: one line `total_events: <count>`, one line `top_source: <source>`, \
             one line `audit_tag: {}` exactly, and a recommendation line that mentions \
             consolidation (deduplicate/dedupe/consolidate/merge all count).",
            p.audit_word
        ),
        fix_feedback: format!(
            "The summary is missing the audit tag line. Add `audit_tag: {}` exactly.",
            p.audit_word
        ),
        verifier_reads: vec![
            "spec.md".into(),
            "workspace/summary.txt".into(),
            "reports/changes.md".into(),
        ],
        brief_only_files: vec![(
            "workspace/summary.txt".into(),
            "total_events: unknown\nnotes: log reviewed, no required format available\n".into(),
        )],
    }
}

fn solution_for(instance: &TaskInstance) -> Solution {
    let seed = instance.metadata.seed;
    match instance.metadata.template_id.as_str() {
        "demo_relay" => relay_solution(&relay_params(seed)),
        "demo_trap" => trap_solution(&trap_params(seed)),
        "demo_open" => open_solution(&open_params(seed)),
        other => panic!("no scripted scenario for template {other}"),
    }
}

fn write_all(files: &[(String, String)]) -> Vec<ScriptedTurn> {
    files
        .iter()
        .map(|(path, content)| ScriptedTurn::call(ToolCallSpec::write(path, content)))
        .collect()
}

fn attestation(instance: &TaskInstance, verdict: &str, checked: &[&str]) -> String {
    attestation_json(
        &instance.task_id(),
        instance.metadata.seed,
        verdict,
        checked,
        &["reports/changes.md"],
    )
}

/// Scripted behaviors for every role of `condition` on `instance`.
pub fn scripts_for(
    instance: &TaskInstance,
    condition: Condition,
    scenario: Scenario,
) -> BTreeMap<Role, ScriptedBehavior> {
    let solution = solution_for(instance);
    let mut scripts = BTreeMap::new();
    match condition {
        Condition::Solo => {
            let mut turns = vec![ScriptedTurn::call(ToolCallSpec::read("spec.md"))];
            turns.extend(write_all(&solution.files));
            turns.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "pass", &["all requirements"]),
            )));
            turns.push(ScriptedTurn::done());
            scripts.insert(Role::Solo, ScriptedBehavior::new(turns));
        }
        Condition::Restricted => {
            let mut turns = vec![
                ScriptedTurn::call(ToolCallSpec::read("brief.md")),
                ScriptedTurn::call(ToolCallSpec::read("workspace")),
            ];
            turns.extend(write_all(&solution.brief_only_files));
            turns.push(ScriptedTurn::done());
            scripts.insert(Role::Restricted, ScriptedBehavior::new(turns));
        }
        Condition::FullTeam => {
            scripts.insert(
                Role::Planner,
                ScriptedBehavior::new(vec![
                    ScriptedTurn::call(ToolCallSpec::read("spec.md")),
                    ScriptedTurn::call(ToolCallSpec::send_message(
                        "executor",
                        &solution.plan_message,
                    )),
                    ScriptedTurn::done(),
                ]),
            );
            scripts.insert(
                Role::Executor,
                ScriptedBehavior::new(executor_turns(&solution, scenario)),
            );
            scripts.insert(
                Role::Verifier,
                verifier_behavior(instance, &solution, scenario),
            );
        }
        Condition::TeamNoPlan => {
            // No Planner: the Executor starts brief-only, the spec-holding
            // Verifier rejects and names the gaps, remediation applies them.
            let mut executor = vec![
                ScriptedTurn::call(ToolCallSpec::read("brief.md")),
                ScriptedTurn::call(ToolCallSpec::read("workspace")),
            ];
            executor.extend(write_all(&solution.brief_only_files));
            executor.push(ScriptedTurn::call(ToolCallSpec::send_message(
                "verifier",
                "Best-effort changes from the brief are in; requirements doc was not available.",
            )));
            executor.push(ScriptedTurn::done());
            // Remediation round: apply exactly what the Verifier relays.
            executor.push(ScriptedTurn::call(ToolCallSpec::read("messages")));
            executor.extend(write_all(&solution.files));
            executor.push(ScriptedTurn::done());
            scripts.insert(Role::Executor, ScriptedBehavior::new(executor));

            let mut verifier = vec![ScriptedTurn::call(ToolCallSpec::read("spec.md"))];
            verifier.extend(
                solution
                    .verifier_reads
                    .iter()
                    .skip(1)
                    .map(|p| ScriptedTurn::call(ToolCallSpec::read(p))),
            );
            verifier.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "fail", &["workspace vs requirements"]),
            )));
            verifier.push(ScriptedTurn::call(ToolCallSpec::send_message(
                "executor",
                &solution.plan_message,
            )));
            verifier.push(ScriptedTurn::done());
            verifier.push(ScriptedTurn::call(ToolCallSpec::read(
                solution
                    .verifier_reads
                    .get(1)
                    .map(String::as_str)
                    .unwrap_or("workspace"),
            )));
            verifier.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "pass", &["all requirements"]),
            )));
            verifier.push(ScriptedTurn::done());
            scripts.insert(Role::Verifier, ScriptedBehavior::new(verifier));
        }
        Condition::TeamNoEvaluate => {
            scripts.insert(
                Role::Planner,
                ScriptedBehavior::new(vec![
                    ScriptedTurn::call(ToolCallSpec::read("spec.md")),
                    ScriptedTurn::call(ToolCallSpec::send_message(
                        "executor",
                        &solution.plan_message,
                    )),
                    ScriptedTurn::done(),
                ]),
            );
            // No attestation writer in this condition.
            scripts.insert(
                Role::Executor,
                ScriptedBehavior::new(executor_turns(&solution, Scenario::Solve)),
            );
        }
    }
    scripts
}

fn executor_turns(solution: &Solution, scenario: Scenario) -> Vec<ScriptedTurn> {
    let mut turns = vec![
        ScriptedTurn::call(ToolCallSpec::read("brief.md")),
        ScriptedTurn::call(ToolCallSpec::read("messages")),
        ScriptedTurn::call(ToolCallSpec::read("messages/0001_planner_executor.md")),
    ];
    let first_round = match scenario {
        Scenario::Remediation => &solution.partial_files,
        _ => &solution.files,
    };
    turns.extend(write_all(first_round));
    turns.push(ScriptedTurn::call(ToolCallSpec::write(
        "reports/changes.md",
        "Applied the relayed requirements; see workspace diffs.\n",
    )));
    turns.push(ScriptedTurn::call(ToolCallSpec::send_message(
        "verifier",
        "Changes applied per plan; notes in reports/changes.md.",
    )));
    turns.push(ScriptedTurn::done());
    if scenario == Scenario::Remediation {
        // Remediation round: read the feedback, apply the real fix.
        turns.push(ScriptedTurn::call(ToolCallSpec::read("messages")));
        turns.extend(write_all(&solution.files));
        turns.push(ScriptedTurn::done());
    }
    turns
}

fn verifier_behavior(
    instance: &TaskInstance,
    solution: &Solution,
    scenario: Scenario,
) -> ScriptedBehavior {
    match scenario {
        Scenario::Solve => {
            let mut turns: Vec<ScriptedTurn> = solution
                .verifier_reads
                .iter()
                .map(|p| ScriptedTurn::call(ToolCallSpec::read(p)))
                .collect();
            turns.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "pass", &["all requirements"]),
            )));
            turns.push(ScriptedTurn::done());
            ScriptedBehavior::new(turns)
        }
        Scenario::Remediation => {
            let mut turns: Vec<ScriptedTurn> = solution
                .verifier_reads
                .iter()
                .map(|p| ScriptedTurn::call(ToolCallSpec::read(p)))
                .collect();
            turns.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "fail", &["one requirement unmet"]),
            )));
            turns.push(ScriptedTurn::call(ToolCallSpec::send_message(
                "executor",
                &solution.fix_feedback,
            )));
            turns.push(ScriptedTurn::done());
            // Round two: re-check and approve.
            turns.extend(
                solution
                    .verifier_reads
                    .iter()
                    .skip(1)
                    .map(|p| ScriptedTurn::call(ToolCallSpec::read(p))),
            );
            turns.push(ScriptedTurn::call(ToolCallSpec::write(
                "attestation.json",
                &attestation(instance, "pass", &["all requirements"]),
            )));
            turns.push(ScriptedTurn::done());
            ScriptedBehavior::new(turns)
        }
        Scenario::MisbehavingVerifier => {
            let target = solution
                .files
                .first()
                .map(|(path, _)| path.clone())
                .unwrap_or_else(|| "workspace/app.py".to_string());
            ScriptedBehavior::new(vec![
                ScriptedTurn::call(ToolCallSpec::write(
                    "attestation.json",
                    &attestation(instance, "pass", &["own rewrite"]),
                )),
                ScriptedTurn::done(),
            ])
            .with_misbehavior(Misbehavior::VerifierAttemptsEdit {
                path: target,
                content: "# rewritten by the verifier\n".to_string(),
                attempts_if_allowed: 3,
            })
        }
    }
}
