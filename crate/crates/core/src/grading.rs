//! Deterministic grader execution and score derivation.
//!
//! `grade.sh` is run against an isolated copy of the final workspace with the
//! workspace path as its one argument; it writes `grade_result.json` (an
//! ordered list of named checks) into its working directory and exits 0 iff
//! every check passes. The attestation check is named
//! `attestation_present_valid` and carries `kind = attestation`, which is what
//! the promotion rule keys on.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskgen::TaskInstance;

pub const ATTESTATION_CHECK_NAME: &str = "attestation_present_valid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    #[default]
    Structural,
    Attestation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    #[serde(default)]
    pub kind: CheckKind,
}

/// Leaderboard verdict rules: strict requires every check to pass;
/// attestation-promoted additionally counts a run as a pass when all failing
/// checks are attestation-kind. Both are retained side by side everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PromotionRule {
    #[default]
    Strict,
    AttestationPromoted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub checks: Vec<CheckResult>,
    /// Passing / total, in [0, 1].
    pub partial: f64,
    pub binary_pass: bool,
    pub promoted_pass: bool,
    pub grader_exit: i32,
}

impl GradeResult {
    /// Derive scores from an ordered check list plus the grader's exit code.
    pub fn from_checks(checks: Vec<CheckResult>, grader_exit: i32) -> Self {
        let total = checks.len();
        let passing = checks.iter().filter(|c| c.pass).count();
        let partial = if total == 0 {
            0.0
        } else {
            passing as f64 / total as f64
        };
        let binary_pass = total > 0 && passing == total;
        let promoted_pass = binary_pass
            || (passing >= 1
                && checks
                    .iter()
                    .filter(|c| !c.pass)
                    .all(|c| c.kind == CheckKind::Attestation));
        GradeResult {
            checks,
            partial,
            binary_pass,
            promoted_pass,
            grader_exit,
        }
    }

    pub fn verdict(&self, rule: PromotionRule) -> bool {
        match rule {
            PromotionRule::Strict => self.binary_pass,
            PromotionRule::AttestationPromoted => self.promoted_pass,
        }
    }
}

/// Apply a promotion rule; both verdicts stay available on the result.
pub fn apply_promotion(result: &GradeResult, rule: PromotionRule) -> bool {
    result.verdict(rule)
}

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("grader script missing at {0}")]
    GraderAbsent(PathBuf),
    #[error("grader failed to run: {0}")]
    GraderCrash(String),
    #[error("grader produced malformed output: {0}")]
    MalformedOutput(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
struct GraderOutput {
    checks: Vec<CheckResult>,
}

/// Run the bundle's grader against a workspace snapshot.
///
/// Grading happens in a fresh isolated directory holding only the grader, a
/// copy of the snapshot, and the attestation (when one exists), so agent-side
/// state never leaks into grading and graders cannot see run internals.
pub fn run_grader(
    instance: &TaskInstance,
    workspace_snapshot: &Path,
    attestation: Option<&Path>,
) -> Result<GradeResult, GradeError> {
    let grader_src = instance.bundle_root.join("grade.sh");
    if !grader_src.is_file() {
        return Err(GradeError::GraderAbsent(grader_src));
    }

    let grading_dir = tempfile::Builder::new()
        .prefix("grading-")
        .tempdir()
        .map_err(|source| GradeError::Io {
            path: PathBuf::from("tempdir"),
            source,
        })?;
    let ws_copy = grading_dir.path().join("workspace");
    copy_dir(workspace_snapshot, &ws_copy)?;
    fs::copy(&grader_src, grading_dir.path().join("grade.sh")).map_err(|source| {
        GradeError::Io {
            path: grader_src.clone(),
            source,
        }
    })?;
    if let Some(att) = attestation {
        if att.is_file() {
            fs::copy(att, grading_dir.path().join("attestation.json")).map_err(|source| {
                GradeError::Io {
                    path: att.to_path_buf(),
                    source,
                }
            })?;
        }
    }

    let output = Command::new("sh")
        .arg("grade.sh")
        .arg(&ws_copy)
        .current_dir(grading_dir.path())
        .output()
        .map_err(|e| GradeError::GraderCrash(e.to_string()))?;
    let exit = output.status.code().unwrap_or(-1);

    let result_path = grading_dir.path().join("grade_result.json");
    let bytes = fs::read(&result_path).map_err(|_| {
        GradeError::MalformedOutput(format!(
            "grade_result.json not written (grader exit {exit}, stderr: {})",
            String::from_utf8_lossy(&output.stderr).trim()
        ))
    })?;
    let parsed: GraderOutput = serde_json::from_slice(&bytes)
        .map_err(|e| GradeError::MalformedOutput(format!("grade_result.json: {e}")))?;
    if parsed.checks.is_empty() {
        return Err(GradeError::MalformedOutput(
            "grader declared zero checks".to_string(),
        ));
    }

    Ok(GradeResult::from_checks(parsed.checks, exit))
}

pub(crate) fn copy_dir(src: &Path, dst: &Path) -> Result<(), GradeError> {
    fs::create_dir_all(dst).map_err(|source| GradeError::Io {
        path: dst.to_path_buf(),
        source,
    })?;
    if !src.exists() {
        return Ok(());
    }
    let entries = fs::read_dir(src).map_err(|source| GradeError::Io {
        path: src.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| GradeError::Io {
            path: src.to_path_buf(),
            source,
        })?;
        let from = entry.path();
        let to = dst.join(entry.file_name());
        if from.is_dir() {
            copy_dir(&from, &to)?;
        } else {
            fs::copy(&from, &to).map_err(|source| GradeError::Io {
                path: from.clone(),
                source,
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{materialize, SeedMode, TemplateRegistry};
    use tempfile::TempDir;

    fn check(name: &str, pass: bool, kind: CheckKind) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            pass,
            kind,
        }
    }

    #[test]
    fn partial_and_binary_follow_counts() {
        let all_pass: Vec<CheckResult> = (0..10)
            .map(|i| check(&format!("c{i}"), true, CheckKind::Structural))
            .collect();
        let r = GradeResult::from_checks(all_pass, 0);
        assert_eq!(r.partial, 1.0);
        assert!(r.binary_pass && r.promoted_pass);

        let seven: Vec<CheckResult> = (0..10)
            .map(|i| check(&format!("c{i}"), i < 7, CheckKind::Structural))
            .collect();
        let r = GradeResult::from_checks(seven, 1);
        assert!((r.partial - 0.7).abs() < 1e-12);
        assert!(!r.binary_pass && !r.promoted_pass);
    }

    #[test]
    fn attestation_only_failure_is_promoted() {
        let mut checks: Vec<CheckResult> = (0..9)
            .map(|i| check(&format!("c{i}"), true, CheckKind::Structural))
            .collect();
        checks.push(check(ATTESTATION_CHECK_NAME, false, CheckKind::Attestation));
        let r = GradeResult::from_checks(checks, 1);
        assert!((r.partial - 0.9).abs() < 1e-12);
        assert!(!r.binary_pass);
        assert!(r.promoted_pass);
        assert!(!apply_promotion(&r, PromotionRule::Strict));
        assert!(apply_promotion(&r, PromotionRule::AttestationPromoted));
    }

    #[test]
    fn promotion_needs_at_least_one_passing_check() {
        let checks = vec![check(ATTESTATION_CHECK_NAME, false, CheckKind::Attestation)];
        let r = GradeResult::from_checks(checks, 1);
        assert!(!r.promoted_pass);
    }

    #[test]
    fn binary_pass_implies_promoted_pass() {
        let r = GradeResult::from_checks(vec![check("only", true, CheckKind::Structural)], 0);
        assert!(r.binary_pass && r.promoted_pass);
    }

    fn relay_instance() -> (TempDir, TaskInstance) {
        let registry = TemplateRegistry::builtin();
        let dir = TempDir::new().unwrap();
        let dest = dir.path().join("bundle");
        let instance = materialize(&registry, "demo_relay", 0, SeedMode::Public, &dest).unwrap();
        (dir, instance)
    }

    #[test]
    fn grader_runs_against_initial_workspace() {
        let (_dir, instance) = relay_instance();
        let ws = instance.bundle_root.join("workspace");
        let r = run_grader(&instance, &ws, None).unwrap();
        assert_eq!(r.checks.len(), 9);
        // The untouched workspace keeps the structural app checks but fails
        // every reconfiguration check and the attestation check.
        assert!(!r.binary_pass);
        assert!(r.partial > 0.0 && r.partial < 1.0);
        assert_ne!(r.grader_exit, 0);
        let names: Vec<_> = r.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names[0], "config_retry");
        assert_eq!(names[8], ATTESTATION_CHECK_NAME);
        assert_eq!(r.checks[8].kind, CheckKind::Attestation);
    }

    #[test]
    fn grader_is_deterministic_across_reruns() {
        let (_dir, instance) = relay_instance();
        let ws = instance.bundle_root.join("workspace");
        let a = run_grader(&instance, &ws, None).unwrap();
        let b = run_grader(&instance, &ws, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn passing_workspace_with_attestation_gets_binary_pass() {
        let (_dir, instance) = relay_instance();
        let p = crate::taskgen::templates::relay_params(0);
        let ws = instance.bundle_root.join("workspace");
        fs::write(
            ws.join("config.ini"),
            format!(
                "[service]\nretry_limit = {}\ntimeout_ms = {}\nendpoint = /v2/{}\nauth_header = X-{}-Key\n",
                p.retry, p.timeout_ms, p.endpoint_word, p.header_word
            ),
        )
        .unwrap();
        let app = fs::read_to_string(ws.join("app.py")).unwrap();
        fs::write(
            ws.join("app.py"),
            app.replace("MAX_RETRIES = 1", &format!("MAX_RETRIES = {}", p.retry)),
        )
        .unwrap();

        // Without an attestation the run is strict-fail but promoted-pass.
        let r = run_grader(&instance, &ws, None).unwrap();
        assert!(!r.binary_pass);
        assert!(r.promoted_pass);

        let att = instance.bundle_root.join("attestation.json");
        fs::write(&att, b"{\"verdict\": \"pass\"}\n").unwrap();
        let r = run_grader(&instance, &ws, Some(&att)).unwrap();
        assert!(r.binary_pass, "{:?}", r.checks);
        assert_eq!(r.grader_exit, 0);
    }

    #[test]
    fn missing_grader_is_reported() {
        let (_dir, instance) = relay_instance();
        fs::remove_file(instance.bundle_root.join("grade.sh")).unwrap();
        let ws = instance.bundle_root.join("workspace");
        assert!(matches!(
            run_grader(&instance, &ws, None),
            Err(GradeError::GraderAbsent(_))
        ));
    }
}
