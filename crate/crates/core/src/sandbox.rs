//! Role-permission matrix and the tool-request gate.
//!
//! The canonical matrix assigns each role an access level over seven resource
//! classes. The gate classifies a tool request by role, action, and canonical
//! path, then either denies it (enforced modes) or grants it while recording
//! the would-be denial as a violation (prompt-only mode). Grader-side files
//! (`grade.sh`, `task.json`, `setup.sh`, grading outputs) are outside every
//! role's filesystem universe in every mode, mirroring a layout where those
//! paths are simply not mounted.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Agent roles, including the two single-agent pseudo-roles used by the
/// condition wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planner,
    Executor,
    Verifier,
    Solo,
    Restricted,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Planner,
        Role::Executor,
        Role::Verifier,
        Role::Solo,
        Role::Restricted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Executor => "executor",
            Role::Verifier => "verifier",
            Role::Solo => "solo",
            Role::Restricted => "restricted",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resource classes a tool request can touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Spec,
    Brief,
    Workspace,
    Messages,
    Reports,
    Attestation,
    Execute,
}

impl Resource {
    pub const ALL: [Resource; 7] = [
        Resource::Spec,
        Resource::Brief,
        Resource::Workspace,
        Resource::Messages,
        Resource::Reports,
        Resource::Attestation,
        Resource::Execute,
    ];
}

/// Access level for one (role, resource) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    None,
    Read,
    ReadWrite,
}

impl Access {
    pub fn allows_read(&self) -> bool {
        matches!(self, Access::Read | Access::ReadWrite)
    }

    pub fn allows_write(&self) -> bool {
        matches!(self, Access::ReadWrite)
    }
}

/// Enforcement regime for a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnforcementMode {
    /// Roles by instruction only: every in-universe request is granted, and
    /// would-be denials are recorded as violations.
    PromptOnly,
    /// Separated environments and histories; the matrix denies hard.
    #[default]
    Enforced,
    /// Separated environments, shared conversation; matrix semantics are
    /// identical to `Enforced`.
    EnforcedSharedHistory,
}

impl EnforcementMode {
    pub fn is_enforced(&self) -> bool {
        matches!(
            self,
            EnforcementMode::Enforced | EnforcementMode::EnforcedSharedHistory
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EnforcementMode::PromptOnly => "prompt_only",
            EnforcementMode::Enforced => "enforced",
            EnforcementMode::EnforcedSharedHistory => "enforced_shared_history",
        }
    }
}

/// Closed set of violation event labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    VerifierModifiesCode,
    VerifierRunsCommand,
    PlannerWritesCode,
    PlannerRunsCommand,
    ExecutorReadsSpec,
    ExecutorWritesAttestation,
    PathEscape,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::VerifierModifiesCode => "verifier-modifies-code",
            ViolationKind::VerifierRunsCommand => "verifier-runs-command",
            ViolationKind::PlannerWritesCode => "planner-writes-code",
            ViolationKind::PlannerRunsCommand => "planner-runs-command",
            ViolationKind::ExecutorReadsSpec => "executor-reads-spec",
            ViolationKind::ExecutorWritesAttestation => "executor-writes-attestation",
            ViolationKind::PathEscape => "path-escape",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The role x resource access table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionMatrix {
    cells: BTreeMap<(Role, Resource), Access>,
}

impl PermissionMatrix {
    /// The canonical matrix.
    ///
    /// Planner: spec read, brief read, messages read-write, all else none.
    /// Executor: brief read, workspace read-write, messages read-write,
    /// reports read-write, execute allowed, spec none. Verifier: spec read,
    /// workspace read, reports read, messages read-write, attestation write,
    /// execute none. Solo holds everything; Restricted holds the Executor row.
    pub fn canonical() -> Self {
        use Access::*;
        use Resource::*;
        use Role::*;
        let mut cells = BTreeMap::new();
        let mut set = |role, res, acc| {
            cells.insert((role, res), acc);
        };

        set(Planner, Spec, Read);
        set(Planner, Brief, Read);
        set(Planner, Workspace, None);
        set(Planner, Messages, ReadWrite);
        set(Planner, Reports, None);
        set(Planner, Attestation, None);
        set(Planner, Execute, None);

        set(Executor, Spec, None);
        set(Executor, Brief, Read);
        set(Executor, Workspace, ReadWrite);
        set(Executor, Messages, ReadWrite);
        set(Executor, Reports, ReadWrite);
        set(Executor, Attestation, None);
        set(Executor, Execute, ReadWrite);

        set(Verifier, Spec, Read);
        set(Verifier, Brief, None);
        set(Verifier, Workspace, Read);
        set(Verifier, Messages, ReadWrite);
        set(Verifier, Reports, Read);
        set(Verifier, Attestation, ReadWrite);
        set(Verifier, Execute, None);

        for res in Resource::ALL {
            set(Solo, res, ReadWrite);
        }

        set(Restricted, Spec, None);
        set(Restricted, Brief, Read);
        set(Restricted, Workspace, ReadWrite);
        set(Restricted, Messages, ReadWrite);
        set(Restricted, Reports, ReadWrite);
        set(Restricted, Attestation, None);
        set(Restricted, Execute, ReadWrite);

        PermissionMatrix { cells }
    }

    /// Apply condition-specific cell overrides on top of this matrix.
    pub fn with_overrides(&self, overrides: &[((Role, Resource), Access)]) -> Self {
        let mut cells = self.cells.clone();
        for ((role, res), acc) in overrides {
            cells.insert((*role, *res), *acc);
        }
        PermissionMatrix { cells }
    }

    pub fn access(&self, role: Role, resource: Resource) -> Access {
        *self.cells.get(&(role, resource)).unwrap_or(&Access::None)
    }

    /// True when the role holds spec read, workspace write, and attestation
    /// write at once. Only Solo may.
    pub fn breaks_separation_of_duties(&self, role: Role) -> bool {
        self.access(role, Resource::Spec).allows_read()
            && self.access(role, Resource::Workspace).allows_write()
            && self.access(role, Resource::Attestation).allows_write()
    }
}

/// The canonical role-permission matrix, immutable.
pub fn canonical_matrix() -> PermissionMatrix {
    PermissionMatrix::canonical()
}

/// What a tool request wants to do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolAction {
    Read { path: String },
    Write { path: String, content: String },
    Run { command: String },
    SendMessage { to: Role, body: String },
}

impl ToolAction {
    pub fn tool_name(&self) -> &'static str {
        match self {
            ToolAction::Read { .. } => "read",
            ToolAction::Write { .. } => "write",
            ToolAction::Run { .. } => "run",
            ToolAction::SendMessage { .. } => "send_message",
        }
    }
}

/// One tool request presented to the gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub role: Role,
    pub action: ToolAction,
}

/// The gate's verdict on one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub allowed: bool,
    pub violation: Option<ViolationKind>,
    pub reason: String,
}

/// Where a path lands after canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathClass {
    Resource(Resource),
    /// Inside the bundle but not part of any role's universe (grader files,
    /// task metadata, grading outputs).
    GraderPrivate,
    /// Escapes the bundle root.
    Escape,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("bundle missing at {0}")]
    BundleMissing(PathBuf),
    #[error("request denied: {0}")]
    Denied(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Lexically normalize `path` against the bundle root, resolving `.`/`..`
/// without touching the filesystem. Returns the bundle-relative path, or
/// `None` when the path escapes the root.
pub fn canonicalize_within(bundle_root: &Path, path: &str) -> Option<PathBuf> {
    let raw = Path::new(path);
    let joined: PathBuf = if raw.is_absolute() {
        match raw.strip_prefix(bundle_root) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => return None,
        }
    } else {
        raw.to_path_buf()
    };

    let mut parts: Vec<std::ffi::OsString> = Vec::new();
    for comp in joined.components() {
        match comp {
            Component::CurDir => {}
            Component::Normal(c) => parts.push(c.to_os_string()),
            Component::ParentDir => {
                parts.pop()?;
            }
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    Some(parts.iter().collect())
}

/// Classify a raw path string relative to the bundle root.
pub fn classify_path(bundle_root: &Path, path: &str) -> PathClass {
    let rel = match canonicalize_within(bundle_root, path) {
        Some(rel) => rel,
        None => return PathClass::Escape,
    };
    let mut comps = rel.components();
    let first = match comps.next() {
        Some(Component::Normal(c)) => c.to_string_lossy().to_string(),
        // The bundle root itself: treat as a workspace-level listing target.
        _ => return PathClass::GraderPrivate,
    };
    match first.as_str() {
        "spec.md" => PathClass::Resource(Resource::Spec),
        "brief.md" => PathClass::Resource(Resource::Brief),
        "workspace" => PathClass::Resource(Resource::Workspace),
        "messages" => PathClass::Resource(Resource::Messages),
        "reports" => PathClass::Resource(Resource::Reports),
        "attestation.json" => PathClass::Resource(Resource::Attestation),
        _ => PathClass::GraderPrivate,
    }
}

/// Per-session gate: an effective matrix, a mode, and the bundle root.
#[derive(Debug, Clone)]
pub struct Gate {
    matrix: PermissionMatrix,
    mode: EnforcementMode,
    bundle_root: PathBuf,
}

impl Gate {
    pub fn new(matrix: PermissionMatrix, mode: EnforcementMode, bundle_root: PathBuf) -> Self {
        Gate {
            matrix,
            mode,
            bundle_root,
        }
    }

    pub fn mode(&self) -> EnforcementMode {
        self.mode
    }

    pub fn matrix(&self) -> &PermissionMatrix {
        &self.matrix
    }

    pub fn bundle_root(&self) -> &Path {
        &self.bundle_root
    }

    /// Decide one tool request under this gate's matrix and mode.
    pub fn check(&self, request: &ToolRequest) -> GateDecision {
        let role = request.role;
        let (resource, wants_write, path_class) = match &request.action {
            ToolAction::Read { path } => {
                let class = classify_path(&self.bundle_root, path);
                match class {
                    PathClass::Resource(res) => (res, false, class),
                    _ => return self.non_resource_decision(class, role, &request.action),
                }
            }
            ToolAction::Write { path, .. } => {
                let class = classify_path(&self.bundle_root, path);
                match class {
                    PathClass::Resource(res) => (res, true, class),
                    _ => return self.non_resource_decision(class, role, &request.action),
                }
            }
            ToolAction::Run { .. } => (
                Resource::Execute,
                true,
                PathClass::Resource(Resource::Execute),
            ),
            ToolAction::SendMessage { .. } => (
                Resource::Messages,
                true,
                PathClass::Resource(Resource::Messages),
            ),
        };
        debug_assert!(matches!(path_class, PathClass::Resource(_)));

        let access = self.matrix.access(role, resource);
        let matrix_allows = if wants_write {
            access.allows_write()
        } else {
            access.allows_read()
        };

        if matrix_allows {
            return GateDecision {
                allowed: true,
                violation: None,
                reason: format!(
                    "{role} {} {resource:?}: allowed",
                    request.action.tool_name()
                ),
            };
        }

        let violation = violation_label(role, &request.action, resource);
        let reason = format!(
            "{role} {} {resource:?}: denied by matrix",
            request.action.tool_name()
        );
        match self.mode {
            EnforcementMode::PromptOnly => GateDecision {
                allowed: true,
                violation,
                reason: format!("{reason} (granted under prompt_only)"),
            },
            _ => GateDecision {
                allowed: false,
                violation,
                reason,
            },
        }
    }

    fn non_resource_decision(
        &self,
        class: PathClass,
        role: Role,
        action: &ToolAction,
    ) -> GateDecision {
        match class {
            PathClass::Escape => GateDecision {
                allowed: false,
                violation: Some(ViolationKind::PathEscape),
                reason: format!("{role} {}: path escapes bundle root", action.tool_name()),
            },
            PathClass::GraderPrivate => GateDecision {
                allowed: false,
                violation: None,
                reason: format!(
                    "{role} {}: path is not part of any role filesystem",
                    action.tool_name()
                ),
            },
            PathClass::Resource(_) => unreachable!("resource paths are handled by check"),
        }
    }
}

fn violation_label(role: Role, action: &ToolAction, resource: Resource) -> Option<ViolationKind> {
    match (role, action, resource) {
        (Role::Verifier, ToolAction::Write { .. }, Resource::Workspace) => {
            Some(ViolationKind::VerifierModifiesCode)
        }
        (Role::Verifier, ToolAction::Run { .. }, _) => Some(ViolationKind::VerifierRunsCommand),
        (Role::Planner, ToolAction::Write { .. }, Resource::Workspace) => {
            Some(ViolationKind::PlannerWritesCode)
        }
        (Role::Planner, ToolAction::Run { .. }, _) => Some(ViolationKind::PlannerRunsCommand),
        (Role::Executor, ToolAction::Read { .. }, Resource::Spec) => {
            Some(ViolationKind::ExecutorReadsSpec)
        }
        (Role::Executor, ToolAction::Write { .. }, Resource::Attestation) => {
            Some(ViolationKind::ExecutorWritesAttestation)
        }
        _ => None,
    }
}

/// A role-scoped view over a materialized bundle: reads and writes are routed
/// through the gate, and `visible_paths` lists only what the role can read.
#[derive(Debug)]
pub struct FilesystemView {
    gate: Gate,
    role: Role,
}

impl FilesystemView {
    pub fn new(
        role: Role,
        matrix: PermissionMatrix,
        mode: EnforcementMode,
        bundle_root: &Path,
    ) -> Result<Self, SandboxError> {
        if !bundle_root.is_dir() {
            return Err(SandboxError::BundleMissing(bundle_root.to_path_buf()));
        }
        Ok(FilesystemView {
            gate: Gate::new(matrix, mode, bundle_root.to_path_buf()),
            role,
        })
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    /// Top-level entries of the bundle this role can read, as bundle-relative
    /// strings, sorted. Under prompt-only everything in the role universe is
    /// visible.
    pub fn visible_roots(&self) -> Vec<String> {
        let candidates = [
            ("spec.md", Resource::Spec),
            ("brief.md", Resource::Brief),
            ("workspace", Resource::Workspace),
            ("messages", Resource::Messages),
            ("reports", Resource::Reports),
            ("attestation.json", Resource::Attestation),
        ];
        candidates
            .iter()
            .filter(|(_, res)| match self.gate.mode() {
                EnforcementMode::PromptOnly => true,
                _ => self.gate.matrix().access(self.role, *res).allows_read(),
            })
            .map(|(name, _)| name.to_string())
            .collect()
    }

    /// All readable files under the visible roots, sorted by relative path.
    pub fn visible_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        for root in self.visible_roots() {
            let abs = self.gate.bundle_root().join(&root);
            if abs.is_file() {
                out.push(root.clone());
            } else if abs.is_dir() {
                collect_files(&abs, self.gate.bundle_root(), &mut out);
            }
        }
        out.sort();
        out
    }

    pub fn read(&self, path: &str) -> Result<(Vec<u8>, GateDecision), SandboxError> {
        let request = ToolRequest {
            role: self.role,
            action: ToolAction::Read {
                path: path.to_string(),
            },
        };
        let decision = self.gate.check(&request);
        if !decision.allowed {
            return Err(SandboxError::Denied(decision.reason));
        }
        let rel = canonicalize_within(self.gate.bundle_root(), path)
            .expect("allowed read paths canonicalize");
        let abs = self.gate.bundle_root().join(rel);
        let bytes = fs::read(&abs).map_err(|source| SandboxError::Io { path: abs, source })?;
        Ok((bytes, decision))
    }

    pub fn write(&self, path: &str, content: &[u8]) -> Result<GateDecision, SandboxError> {
        let request = ToolRequest {
            role: self.role,
            action: ToolAction::Write {
                path: path.to_string(),
                content: String::from_utf8_lossy(content).into_owned(),
            },
        };
        let decision = self.gate.check(&request);
        if !decision.allowed {
            return Err(SandboxError::Denied(decision.reason));
        }
        let rel = canonicalize_within(self.gate.bundle_root(), path)
            .expect("allowed write paths canonicalize");
        let abs = self.gate.bundle_root().join(rel);
        if let Some(parent) = abs.parent() {
            fs::create_dir_all(parent).map_err(|source| SandboxError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&abs, content).map_err(|source| SandboxError::Io { path: abs, source })?;
        Ok(decision)
    }

    /// Stage the role's readable files into `dest`, the same shape a
    /// bind-mounted per-role container filesystem would expose. Decisions are
    /// unchanged; this only realizes the visible subset on disk.
    pub fn realize(&self, dest: &Path) -> Result<Vec<String>, SandboxError> {
        let staged = self.visible_paths();
        for rel in &staged {
            let src = self.gate.bundle_root().join(rel);
            let dst = dest.join(rel);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(|source| SandboxError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            fs::copy(&src, &dst).map_err(|source| SandboxError::Io {
                path: src.clone(),
                source,
            })?;
        }
        Ok(staged)
    }
}

fn collect_files(dir: &Path, root: &Path, out: &mut Vec<String>) {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(_) => return,
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.is_dir() {
            collect_files(&path, root, out);
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gate(mode: EnforcementMode) -> Gate {
        Gate::new(canonical_matrix(), mode, PathBuf::from("/bundle"))
    }

    fn read(role: Role, path: &str) -> ToolRequest {
        ToolRequest {
            role,
            action: ToolAction::Read {
                path: path.to_string(),
            },
        }
    }

    fn write(role: Role, path: &str) -> ToolRequest {
        ToolRequest {
            role,
            action: ToolAction::Write {
                path: path.to_string(),
                content: String::new(),
            },
        }
    }

    fn run(role: Role) -> ToolRequest {
        ToolRequest {
            role,
            action: ToolAction::Run {
                command: "ls".to_string(),
            },
        }
    }

    #[test]
    fn canonical_matrix_rows() {
        let m = canonical_matrix();
        assert_eq!(m.access(Role::Executor, Resource::Spec), Access::None);
        assert_eq!(m.access(Role::Verifier, Resource::Workspace), Access::Read);
        assert_eq!(
            m.access(Role::Verifier, Resource::Attestation),
            Access::ReadWrite
        );
        for res in Resource::ALL {
            assert_eq!(m.access(Role::Solo, res), Access::ReadWrite);
        }
    }

    #[test]
    fn separation_of_duties_only_breaks_for_solo() {
        let m = canonical_matrix();
        for role in Role::ALL {
            assert_eq!(m.breaks_separation_of_duties(role), role == Role::Solo);
        }
    }

    #[test]
    fn verifier_workspace_write_denied_enforced() {
        let d = gate(EnforcementMode::Enforced).check(&write(Role::Verifier, "workspace/app.py"));
        assert!(!d.allowed);
        assert_eq!(d.violation, Some(ViolationKind::VerifierModifiesCode));
    }

    #[test]
    fn verifier_attestation_write_allowed() {
        let d = gate(EnforcementMode::Enforced).check(&write(Role::Verifier, "attestation.json"));
        assert!(d.allowed);
        assert_eq!(d.violation, None);
    }

    #[test]
    fn prompt_only_grants_but_records_violation() {
        let d = gate(EnforcementMode::PromptOnly).check(&write(Role::Verifier, "workspace/app.py"));
        assert!(d.allowed);
        assert_eq!(d.violation, Some(ViolationKind::VerifierModifiesCode));
    }

    #[test]
    fn executor_spec_read_labeled() {
        let d = gate(EnforcementMode::Enforced).check(&read(Role::Executor, "spec.md"));
        assert!(!d.allowed);
        assert_eq!(d.violation, Some(ViolationKind::ExecutorReadsSpec));
    }

    #[test]
    fn planner_run_labeled() {
        let d = gate(EnforcementMode::Enforced).check(&run(Role::Planner));
        assert!(!d.allowed);
        assert_eq!(d.violation, Some(ViolationKind::PlannerRunsCommand));
    }

    #[test]
    fn escapes_denied_in_every_mode() {
        for mode in [
            EnforcementMode::PromptOnly,
            EnforcementMode::Enforced,
            EnforcementMode::EnforcedSharedHistory,
        ] {
            let d = gate(mode).check(&read(Role::Solo, "workspace/../../etc/passwd"));
            assert!(!d.allowed, "{mode:?}");
            assert_eq!(d.violation, Some(ViolationKind::PathEscape));
        }
    }

    #[test]
    fn traversal_resolves_to_same_decision_as_canonical_path() {
        let g = gate(EnforcementMode::Enforced);
        let direct = g.check(&read(Role::Planner, "spec.md"));
        let twisted = g.check(&read(Role::Planner, "workspace/../spec.md"));
        assert_eq!(direct.allowed, twisted.allowed);
        assert_eq!(direct.violation, twisted.violation);
    }

    #[test]
    fn grader_files_outside_every_role_universe() {
        for mode in [EnforcementMode::PromptOnly, EnforcementMode::Enforced] {
            for path in ["grade.sh", "task.json", "setup.sh", "grade_result.json"] {
                let d = gate(mode).check(&read(Role::Solo, path));
                assert!(!d.allowed, "{path} under {mode:?}");
                assert_eq!(d.violation, None);
            }
        }
    }

    #[test]
    fn send_message_allowed_for_team_roles() {
        let g = gate(EnforcementMode::Enforced);
        for role in [Role::Planner, Role::Executor, Role::Verifier] {
            let d = g.check(&ToolRequest {
                role,
                action: ToolAction::SendMessage {
                    to: Role::Executor,
                    body: "hi".to_string(),
                },
            });
            assert!(d.allowed, "{role}");
        }
    }

    #[test]
    fn mode_equivalence_of_detection() {
        // For a fixed request sequence, prompt-only violations equal the
        // violations attached to enforced denials, as multisets.
        let requests = vec![
            read(Role::Executor, "spec.md"),
            write(Role::Verifier, "workspace/app.py"),
            write(Role::Verifier, "workspace/b.py"),
            run(Role::Verifier),
            run(Role::Planner),
            write(Role::Planner, "workspace/c.py"),
            write(Role::Executor, "attestation.json"),
            read(Role::Planner, "spec.md"),
            write(Role::Executor, "workspace/app.py"),
        ];
        let enforced = gate(EnforcementMode::Enforced);
        let prompt = gate(EnforcementMode::PromptOnly);
        let mut denied_labels: Vec<_> = requests
            .iter()
            .map(|r| enforced.check(r))
            .filter(|d| !d.allowed)
            .filter_map(|d| d.violation)
            .collect();
        let mut prompt_labels: Vec<_> = requests
            .iter()
            .map(|r| prompt.check(r))
            .filter_map(|d| d.violation)
            .collect();
        denied_labels.sort();
        prompt_labels.sort();
        assert_eq!(denied_labels, prompt_labels);
    }

    #[test]
    fn canonicalize_rejects_absolute_outside_root() {
        let root = PathBuf::from("/bundle");
        assert!(canonicalize_within(&root, "/etc/passwd").is_none());
        assert_eq!(
            canonicalize_within(&root, "/bundle/workspace/a.py"),
            Some(PathBuf::from("workspace/a.py"))
        );
        assert_eq!(
            canonicalize_within(&root, "workspace/./x/../a.py"),
            Some(PathBuf::from("workspace/a.py"))
        );
        assert!(canonicalize_within(&root, "../outside").is_none());
    }
}
