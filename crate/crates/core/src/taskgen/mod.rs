//! Task-bundle contract and deterministic, seed-parameterized materialization.
//!
//! A bundle directory holds `spec.md`, `brief.md`, `workspace/`, an executable
//! `grade.sh`, and a `task.json` metadata record. Critical tokens appear only
//! in the spec text, never in the brief or the workspace, which is what makes
//! the relay measurable.

pub mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Coordination failure-mode classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Relay,
    AdversarialTrap,
    OpenEnded,
    Discovery,
    Synthesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Expert,
    Unrated,
}

/// Seed admission mode: public seeds are released, held-out seeds are for the
/// hidden leaderboard only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    #[default]
    Public,
    Leaderboard,
}

/// Public seeds are 0-2; 3-4 are reserved-unused; 5 and above are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub held_out_floor: u64,
}

impl Default for SeedPolicy {
    fn default() -> Self {
        SeedPolicy { held_out_floor: 5 }
    }
}

impl SeedPolicy {
    pub fn public_seeds(&self) -> [u64; 3] {
        [0, 1, 2]
    }

    pub fn admit(&self, seed: u64, mode: SeedMode) -> Result<(), TaskGenError> {
        match mode {
            SeedMode::Public => {
                if seed >= self.held_out_floor {
                    Err(TaskGenError::HeldOutSeed { seed })
                } else if seed > 2 {
                    Err(TaskGenError::ReservedSeed { seed })
                } else {
                    Ok(())
                }
            }
            SeedMode::Leaderboard => {
                if (3..self.held_out_floor).contains(&seed) {
                    Err(TaskGenError::ReservedSeed { seed })
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("seed {seed} is held out for the hidden leaderboard (public seeds are 0-2)")]
    HeldOutSeed { seed: u64 },
    #[error("seed {seed} is reserved-unused")]
    ReservedSeed { seed: u64 },
    #[error("destination {0} exists and is not empty")]
    DestinationNotEmpty(PathBuf),
    #[error("bundle missing at {0}")]
    BundleMissing(PathBuf),
    #[error("invalid task metadata at {path}: {detail}")]
    InvalidMetadata { path: PathBuf, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One generated file, before it hits disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub content: Vec<u8>,
    pub executable: bool,
}

/// The in-memory output of a template generator for one seed.
#[derive(Debug, Clone)]
pub struct GeneratedBundle {
    /// Relative path -> file, excluding `task.json` (added at materialization).
    pub files: BTreeMap<String, FileEntry>,
    pub critical_tokens: BTreeSet<String>,
    pub check_count: u32,
}

/// A task template: identity, labels, and a pure seed -> bundle generator.
#[derive(Clone)]
pub struct TaskTemplate {
    pub template_id: String,
    pub category: Category,
    pub difficulty: Difficulty,
    pub generator: fn(u64) -> GeneratedBundle,
}

impl fmt::Debug for TaskTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskTemplate")
            .field("template_id", &self.template_id)
            .field("category", &self.category)
            .field("difficulty", &self.difficulty)
            .finish()
    }
}

impl TaskTemplate {
    pub fn generate(&self, seed: u64) -> GeneratedBundle {
        (self.generator)(seed)
    }
}

/// Summary row for template listings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSummary {
    pub template_id: String,
    pub category: Category,
    pub difficulty: Difficulty,
    pub check_count: u32,
}

/// Predicate over template listings.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateFilter {
    pub category: Option<Category>,
    pub difficulty: Option<Difficulty>,
}

impl TemplateFilter {
    pub fn matches(&self, t: &TaskTemplate) -> bool {
        self.category.is_none_or(|c| c == t.category)
            && self.difficulty.is_none_or(|d| d == t.difficulty)
    }
}

/// The template store. Built-ins cover the three exercised failure modes.
pub struct TemplateRegistry {
    templates: BTreeMap<String, TaskTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for t in templates::builtin_templates() {
            templates.insert(t.template_id.clone(), t);
        }
        TemplateRegistry { templates }
    }

    pub fn get(&self, template_id: &str) -> Option<&TaskTemplate> {
        self.templates.get(template_id)
    }

    /// Stable ordering by template id.
    pub fn list(&self, filter: TemplateFilter) -> Vec<TemplateSummary> {
        self.templates
            .values()
            .filter(|t| filter.matches(t))
            .map(|t| TemplateSummary {
                template_id: t.template_id.clone(),
                category: t.category,
                difficulty: t.difficulty,
                // check_count is seed-invariant for the built-ins; report seed 0.
                check_count: t.generate(0).check_count,
            })
            .collect()
    }
}

/// The `task.json` metadata record written into every bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMetadata {
    pub template_id: String,
    pub seed: u64,
    pub category: Category,
    pub difficulty: Difficulty,
    pub critical_tokens: BTreeSet<String>,
    pub check_count: u32,
}

/// A materialized bundle on disk.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub bundle_root: PathBuf,
    pub metadata: TaskMetadata,
}

impl TaskInstance {
    pub fn load(bundle_root: &Path) -> Result<Self, TaskGenError> {
        if !bundle_root.is_dir() {
            return Err(TaskGenError::BundleMissing(bundle_root.to_path_buf()));
        }
        let meta_path = bundle_root.join("task.json");
        let bytes = fs::read(&meta_path).map_err(|source| TaskGenError::Io {
            path: meta_path.clone(),
            source,
        })?;
        let metadata: TaskMetadata =
            serde_json::from_slice(&bytes).map_err(|e| TaskGenError::InvalidMetadata {
                path: meta_path,
                detail: e.to_string(),
            })?;
        Ok(TaskInstance {
            bundle_root: bundle_root.to_path_buf(),
            metadata,
        })
    }

    pub fn task_id(&self) -> String {
        format!("{}@{}", self.metadata.template_id, self.metadata.seed)
    }
}

/// Materialize `(template_id, seed)` into `dest`, which must be empty or
/// absent. Repeated calls with equal arguments produce byte-identical trees.
pub fn materialize(
    registry: &TemplateRegistry,
    template_id: &str,
    seed: u64,
    mode: SeedMode,
    dest: &Path,
) -> Result<TaskInstance, TaskGenError> {
    let template = registry
        .get(template_id)
        .ok_or_else(|| TaskGenError::UnknownTemplate(template_id.to_string()))?;
    SeedPolicy::default().admit(seed, mode)?;
    if dest.exists() {
        let occupied = fs::read_dir(dest)
            .map_err(|source| TaskGenError::Io {
                path: dest.to_path_buf(),
                source,
            })?
            .next()
            .is_some();
        if occupied {
            return Err(TaskGenError::DestinationNotEmpty(dest.to_path_buf()));
        }
    }

    let bundle = template.generate(seed);
    let metadata = TaskMetadata {
        template_id: template.template_id.clone(),
        seed,
        category: template.category,
        difficulty: template.difficulty,
        critical_tokens: bundle.critical_tokens.clone(),
        check_count: bundle.check_count,
    };

    fs::create_dir_all(dest.join("workspace")).map_err(|source| TaskGenError::Io {
        path: dest.join("workspace"),
        source,
    })?;
    for (rel, entry) in &bundle.files {
        write_entry(dest, rel, entry)?;
    }
    let meta_json = serde_json::to_vec_pretty(&metadata).expect("metadata serializes");
    let mut meta_newline = meta_json;
    meta_newline.push(b'\n');
    write_entry(
        dest,
        "task.json",
        &FileEntry {
            content: meta_newline,
            executable: false,
        },
    )?;

    Ok(TaskInstance {
        bundle_root: dest.to_path_buf(),
        metadata,
    })
}

fn write_entry(root: &Path, rel: &str, entry: &FileEntry) -> Result<(), TaskGenError> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| TaskGenError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, &entry.content).map_err(|source| TaskGenError::Io {
        path: path.clone(),
        source,
    })?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = if entry.executable { 0o755 } else { 0o644 };
        fs::set_permissions(&path, fs::Permissions::from_mode(mode)).map_err(|source| {
            TaskGenError::Io {
                path: path.clone(),
                source,
            }
        })?;
    }
    Ok(())
}

/// Content hash over a bundle directory: a canonical sorted walk over
/// relative paths with per-file digests and executable flags.
pub fn bundle_hash(root: &Path) -> Result<String, TaskGenError> {
    let mut paths = Vec::new();
    walk_files(root, root, &mut paths)?;
    paths.sort();
    let mut hasher = Sha256::new();
    for rel in &paths {
        let abs = root.join(rel);
        let content = fs::read(&abs).map_err(|source| TaskGenError::Io {
            path: abs.clone(),
            source,
        })?;
        let executable = is_executable(&abs);
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update([u8::from(executable)]);
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

fn is_executable(path: &Path) -> bool {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::metadata(path)
            .map(|m| m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    }
    #[cfg(not(unix))]
    {
        false
    }
}

fn walk_files(dir: &Path, root: &Path, out: &mut Vec<String>) -> Result<(), TaskGenError> {
    let entries = fs::read_dir(dir).map_err(|source| TaskGenError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.is_dir() {
            walk_files(&path, root, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Token normalization used for critical tokens and relay recall: lowercase,
/// punctuation stripped (every non-alphanumeric becomes a separator),
/// whitespace-delimited.
pub fn normalize_tokens(text: &str) -> BTreeSet<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Validation finding codes. All findings are report entries, never errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingCode {
    MissingFile,
    WorkspaceMissing,
    GraderAbsent,
    GraderNotExecutable,
    GraderDeclaresNoChecks,
    CriticalTokenLeakage,
    CriticalTokenMissingFromSpec,
    MetadataInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Check a bundle directory against the layout contract and the
/// critical-token asymmetry. Findings only; nothing here fails hard.
pub fn validate_bundle(bundle_root: &Path) -> ValidationReport {
    let mut findings = Vec::new();
    let mut push = |code, detail: String| findings.push(Finding { code, detail });

    for required in ["spec.md", "brief.md", "task.json"] {
        if !bundle_root.join(required).is_file() {
            push(FindingCode::MissingFile, format!("{required} is missing"));
        }
    }
    if !bundle_root.join("workspace").is_dir() {
        push(
            FindingCode::WorkspaceMissing,
            "workspace/ directory is missing".to_string(),
        );
    }

    let grader = bundle_root.join("grade.sh");
    if !grader.is_file() {
        push(FindingCode::GraderAbsent, "grade.sh is missing".to_string());
    } else if !is_executable(&grader) {
        push(
            FindingCode::GraderNotExecutable,
            "grade.sh is not executable".to_string(),
        );
    }

    let metadata: Option<TaskMetadata> = fs::read(bundle_root.join("task.json"))
        .ok()
        .and_then(|bytes| serde_json::from_slice(&bytes).ok());
    let Some(metadata) = metadata else {
        if bundle_root.join("task.json").is_file() {
            push(
                FindingCode::MetadataInvalid,
                "task.json does not parse as task metadata".to_string(),
            );
        }
        return ValidationReport { findings };
    };

    if metadata.check_count == 0 {
        push(
            FindingCode::GraderDeclaresNoChecks,
            "metadata declares zero grader checks".to_string(),
        );
    }

    let spec_tokens = fs::read_to_string(bundle_root.join("spec.md"))
        .map(|t| normalize_tokens(&t))
        .unwrap_or_default();
    let brief_tokens = fs::read_to_string(bundle_root.join("brief.md"))
        .map(|t| normalize_tokens(&t))
        .unwrap_or_default();
    let mut workspace_tokens = BTreeSet::new();
    let mut ws_files = Vec::new();
    if bundle_root.join("workspace").is_dir() {
        let _ = walk_files(&bundle_root.join("workspace"), bundle_root, &mut ws_files);
    }
    for rel in &ws_files {
        if let Ok(text) = fs::read_to_string(bundle_root.join(rel)) {
            workspace_tokens.extend(normalize_tokens(&text));
        }
    }

    for token in &metadata.critical_tokens {
        if !spec_tokens.contains(token) {
            push(
                FindingCode::CriticalTokenMissingFromSpec,
                format!("critical token {token:?} does not occur in spec.md"),
            );
        }
        if brief_tokens.contains(token) {
            push(
                FindingCode::CriticalTokenLeakage,
                format!("critical token {token:?} leaks into brief.md"),
            );
        }
        if workspace_tokens.contains(token) {
            push(
                FindingCode::CriticalTokenLeakage,
                format!("critical token {token:?} leaks into the workspace"),
            );
        }
    }

    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn materialize_tmp(template: &str, seed: u64) -> (TempDir, TaskInstance) {
        let registry = TemplateRegistry::builtin();
        let dir = TempDir::new().unwrap();
        let dest = dir.path().join("bundle");
        let instance = materialize(&registry, template, seed, SeedMode::Public, &dest).unwrap();
        (dir, instance)
    }

    #[test]
    fn materialize_is_byte_identical_across_calls() {
        let registry = TemplateRegistry::builtin();
        let dir = TempDir::new().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        materialize(&registry, "demo_relay", 0, SeedMode::Public, &a).unwrap();
        materialize(&registry, "demo_relay", 0, SeedMode::Public, &b).unwrap();
        assert_eq!(bundle_hash(&a).unwrap(), bundle_hash(&b).unwrap());
    }

    #[test]
    fn held_out_seed_rejected_in_public_mode() {
        let registry = TemplateRegistry::builtin();
        let dir = TempDir::new().unwrap();
        let err = materialize(
            &registry,
            "demo_relay",
            5,
            SeedMode::Public,
            &dir.path().join("x"),
        )
        .unwrap_err();
        assert!(matches!(err, TaskGenError::HeldOutSeed { seed: 5 }));
        // Reserved band stays unused in both modes.
        for seed in [3, 4] {
            for mode in [SeedMode::Public, SeedMode::Leaderboard] {
                let err = materialize(
                    &registry,
                    "demo_relay",
                    seed,
                    mode,
                    &dir.path().join(format!("r{seed}{mode:?}")),
                )
                .unwrap_err();
                assert!(matches!(err, TaskGenError::ReservedSeed { .. }));
            }
        }
        // Held-out seeds are what leaderboard mode exists for.
        materialize(
            &registry,
            "demo_relay",
            7,
            SeedMode::Leaderboard,
            &dir.path().join("lb"),
        )
        .unwrap();
    }

    #[test]
    fn unknown_template_and_occupied_destination() {
        let registry = TemplateRegistry::builtin();
        let dir = TempDir::new().unwrap();
        assert!(matches!(
            materialize(
                &registry,
                "nope",
                0,
                SeedMode::Public,
                &dir.path().join("x")
            ),
            Err(TaskGenError::UnknownTemplate(_))
        ));
        let dest = dir.path().join("occupied");
        fs::create_dir_all(&dest).unwrap();
        fs::write(dest.join("stale"), b"x").unwrap();
        assert!(matches!(
            materialize(&registry, "demo_relay", 0, SeedMode::Public, &dest),
            Err(TaskGenError::DestinationNotEmpty(_))
        ));
    }

    #[test]
    fn seeds_vary_workspace_but_not_file_names() {
        let registry = TemplateRegistry::builtin();
        for summary in registry.list(TemplateFilter::default()) {
            let t = registry.get(&summary.template_id).unwrap();
            let b0 = t.generate(0);
            let b1 = t.generate(1);
            let names0: Vec<_> = b0.files.keys().collect();
            let names1: Vec<_> = b1.files.keys().collect();
            assert_eq!(names0, names1, "{}", summary.template_id);
            let ws_differs = b0
                .files
                .iter()
                .filter(|(k, _)| k.starts_with("workspace/"))
                .any(|(k, v)| b1.files.get(k.as_str()) != Some(v));
            assert!(
                ws_differs,
                "{}: workspace identical at seeds 0/1",
                summary.template_id
            );
        }
    }

    #[test]
    fn critical_token_asymmetry_holds_for_all_builtins() {
        let registry = TemplateRegistry::builtin();
        for summary in registry.list(TemplateFilter::default()) {
            let t = registry.get(&summary.template_id).unwrap();
            for seed in [0, 1, 2] {
                let bundle = t.generate(seed);
                let spec = String::from_utf8(bundle.files["spec.md"].content.clone()).unwrap();
                let brief = String::from_utf8(bundle.files["brief.md"].content.clone()).unwrap();
                let spec_tokens = normalize_tokens(&spec);
                let brief_tokens = normalize_tokens(&brief);
                let mut ws_tokens = BTreeSet::new();
                for (path, entry) in &bundle.files {
                    if path.starts_with("workspace/") {
                        ws_tokens
                            .extend(normalize_tokens(&String::from_utf8_lossy(&entry.content)));
                    }
                }
                for token in &bundle.critical_tokens {
                    assert!(
                        spec_tokens.contains(token),
                        "{} seed {seed}: {token} not in spec",
                        summary.template_id
                    );
                    assert!(
                        !brief_tokens.contains(token),
                        "{} seed {seed}: {token} leaks into brief",
                        summary.template_id
                    );
                    assert!(
                        !ws_tokens.contains(token),
                        "{} seed {seed}: {token} leaks into workspace",
                        summary.template_id
                    );
                }
            }
        }
    }

    #[test]
    fn validate_clean_bundle_has_no_findings() {
        let (_dir, instance) = materialize_tmp("demo_relay", 0);
        let report = validate_bundle(&instance.bundle_root);
        assert!(report.is_clean(), "{:?}", report.findings);
    }

    #[test]
    fn validate_detects_token_leakage_and_missing_grader() {
        let (_dir, instance) = materialize_tmp("demo_relay", 0);
        let root = &instance.bundle_root;
        // Copy one critical token into the brief.
        let token = instance.metadata.critical_tokens.iter().next().unwrap();
        let mut brief = fs::read_to_string(root.join("brief.md")).unwrap();
        brief.push_str(&format!("\nLeaked: {token}\n"));
        fs::write(root.join("brief.md"), brief).unwrap();
        fs::remove_file(root.join("grade.sh")).unwrap();

        let report = validate_bundle(root);
        assert!(report
            .findings
            .iter()
            .any(|f| f.code == FindingCode::CriticalTokenLeakage));
        assert!(report
            .findings
            .iter()
            .any(|f| f.code == FindingCode::GraderAbsent));
    }

    #[test]
    fn list_templates_filters_and_orders() {
        let registry = TemplateRegistry::builtin();
        let all = registry.list(TemplateFilter::default());
        assert!(all.len() >= 3);
        let ids: Vec<_> = all.iter().map(|s| s.template_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);

        let relay_only = registry.list(TemplateFilter {
            category: Some(Category::Relay),
            difficulty: None,
        });
        assert!(relay_only.iter().any(|s| s.template_id == "demo_relay"));
        let none = registry.list(TemplateFilter {
            category: Some(Category::Synthesis),
            difficulty: None,
        });
        assert!(none.is_empty());
    }

    #[test]
    fn normalize_tokens_strips_case_and_punctuation() {
        let tokens = normalize_tokens("Retry_limit = 6; endpoint: /v2/Quartz!");
        for expected in ["retry", "limit", "6", "endpoint", "v2", "quartz"] {
            assert!(tokens.contains(expected), "{expected}");
        }
        assert!(!tokens.contains("retry_limit"));
    }

    #[test]
    fn metadata_round_trips_through_task_json() {
        let (_dir, instance) = materialize_tmp("demo_trap", 1);
        let loaded = TaskInstance::load(&instance.bundle_root).unwrap();
        assert_eq!(loaded.metadata, instance.metadata);
        assert_eq!(loaded.task_id(), "demo_trap@1");
    }

    #[test]
    fn every_generated_file_is_newline_terminated() {
        let registry = TemplateRegistry::builtin();
        for summary in registry.list(TemplateFilter::default()) {
            let template = registry.get(&summary.template_id).unwrap();
            for seed in [0, 1, 2] {
                for (path, entry) in template.generate(seed).files {
                    assert_eq!(
                        entry.content.last(),
                        Some(&b'\n'),
                        "{} seed {seed}: {path} lacks trailing newline",
                        summary.template_id
                    );
                }
            }
        }
    }
}
