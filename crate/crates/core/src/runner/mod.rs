//! Top-level orchestration: config codes, grid enumeration, ablations, the
//! cost/pass Pareto frontier, role marginals, and report emission.

pub mod ledger;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendConfig, ScriptedBackend, UsageLedger};
use crate::grading::{run_grader, GradeResult};
use crate::sandbox::{EnforcementMode, Role};
use crate::scenarios::{scripts_for, Scenario};
use crate::session::{
    run_session, tool_call_turns, write_trace, Condition, SessionConfig, SessionResult,
    TerminationReason,
};
use crate::stats;
use crate::taskgen::{materialize, SeedMode, TaskInstance, TemplateRegistry};

pub use ledger::{Aggregate, RunLedger, RunRecord};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("malformed config code {0:?} (expected P<f>E<f>V<f>)")]
    MalformedCode(String),
    #[error("unknown family letter {letter:?} in {code:?}")]
    UnknownFamily { letter: char, code: String },
    #[error("grid spec needs nonempty families, tasks, and seeds")]
    EmptyGrid,
    #[error("ledger holds no grid records")]
    NoGridRecords,
    #[error(transparent)]
    TaskGen(#[from] crate::taskgen::TaskGenError),
    #[error(transparent)]
    Session(#[from] crate::session::SessionError),
    #[error(transparent)]
    Ledger(#[from] ledger::LedgerError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Registered backend families keyed by config-code letter. The shipped
/// default registers A, G, and O; letters are configuration, not vendor
/// hard-coding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyRegistry {
    families: BTreeMap<char, BackendConfig>,
}

impl Default for FamilyRegistry {
    fn default() -> Self {
        let make = |family: &str, model: &str, price_in: f64, price_out: f64| BackendConfig {
            family: family.to_string(),
            model: model.to_string(),
            endpoint: String::new(),
            temperature: 0.0,
            price_in_per_million: price_in,
            price_out_per_million: price_out,
            ..BackendConfig::mock()
        };
        let mut families = BTreeMap::new();
        families.insert('A', make("A", "family-a-compact", 1.00, 5.00));
        families.insert('G', make("G", "family-g-compact", 0.30, 2.50));
        families.insert('O', make("O", "family-o-compact", 0.15, 0.60));
        FamilyRegistry { families }
    }
}

impl FamilyRegistry {
    pub fn new(families: BTreeMap<char, BackendConfig>) -> Self {
        FamilyRegistry { families }
    }

    pub fn letters(&self) -> Vec<char> {
        self.families.keys().copied().collect()
    }

    pub fn config(&self, letter: char) -> Option<&BackendConfig> {
        self.families.get(&letter)
    }

    pub fn contains(&self, letter: char) -> bool {
        self.families.contains_key(&letter)
    }
}

/// `P<f>E<f>V<f>` role-to-family assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigCode {
    pub planner: char,
    pub executor: char,
    pub verifier: char,
}

impl ConfigCode {
    pub fn family_for(&self, role: Role) -> Option<char> {
        match role {
            Role::Planner => Some(self.planner),
            Role::Executor => Some(self.executor),
            Role::Verifier => Some(self.verifier),
            _ => None,
        }
    }
}

impl fmt::Display for ConfigCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}E{}V{}", self.planner, self.executor, self.verifier)
    }
}

/// Parse a config code against the registered family set; round-trips through
/// `Display`.
pub fn parse_config(code: &str, registry: &FamilyRegistry) -> Result<ConfigCode, RunnerError> {
    let chars: Vec<char> = code.chars().collect();
    if chars.len() != 6 || chars[0] != 'P' || chars[2] != 'E' || chars[4] != 'V' {
        return Err(RunnerError::MalformedCode(code.to_string()));
    }
    let parsed = ConfigCode {
        planner: chars[1],
        executor: chars[3],
        verifier: chars[5],
    };
    for letter in [parsed.planner, parsed.executor, parsed.verifier] {
        if !registry.contains(letter) {
            return Err(RunnerError::UnknownFamily {
                letter,
                code: code.to_string(),
            });
        }
    }
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub families: Vec<char>,
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub code: ConfigCode,
    pub task: String,
    pub seed: u64,
}

/// Every assignment of families to the three roles, crossed with tasks and
/// seeds, exactly once, in deterministic order.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<PlannedRun>, RunnerError> {
    if spec.families.is_empty() || spec.tasks.is_empty() || spec.seeds.is_empty() {
        return Err(RunnerError::EmptyGrid);
    }
    let mut plan = Vec::new();
    for planner in &spec.families {
        for executor in &spec.families {
            for verifier in &spec.families {
                for task in &spec.tasks {
                    for seed in &spec.seeds {
                        plan.push(PlannedRun {
                            code: ConfigCode {
                                planner: *planner,
                                executor: *executor,
                                verifier: *verifier,
                            },
                            task: task.clone(),
                            seed: *seed,
                        });
                    }
                }
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config: String,
    pub pass_rate: f64,
    pub total_cost_usd: f64,
}

/// Nondominated points in (cost down, pass rate up), sorted by cost
/// ascending, forming the stair-step frontier.
pub fn pareto(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.total_cost_usd
            .partial_cmp(&b.total_cost_usd)
            .expect("costs are finite")
            .then(
                b.pass_rate
                    .partial_cmp(&a.pass_rate)
                    .expect("rates are finite"),
            )
    });
    let mut frontier = Vec::new();
    let mut best_pass = f64::NEG_INFINITY;
    for point in sorted {
        if point.pass_rate > best_pass {
            frontier.push(point.clone());
            best_pass = point.pass_rate;
        }
    }
    frontier
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleMarginal {
    pub role: Role,
    pub family: char,
    /// Mean pass rate over the configs fixing this slot.
    pub mean_pass_rate: f64,
    pub configs_observed: usize,
    /// Bootstrap 95% CI over per-config rates; None below 2 configs.
    pub ci95: Option<(f64, f64)>,
    /// Set when the ledger covers fewer configs than a full grid would.
    pub incomplete_grid: bool,
}

/// Per-verifier-slot confusion summaries over grid records: rows key on the
/// Verifier slot's family letter from the config code.
pub fn confusion_by_verifier_slot(
    run_ledger: &RunLedger,
    registry: &FamilyRegistry,
) -> BTreeMap<char, crate::audit::ConfusionSummary> {
    let mut per_slot: BTreeMap<char, Vec<crate::audit::VerdictOutcome>> = BTreeMap::new();
    for record in run_ledger.records() {
        let Ok(code) = parse_config(&record.config, registry) else {
            continue;
        };
        per_slot
            .entry(code.verifier)
            .or_default()
            .push(crate::audit::VerdictOutcome {
                verdict: record.verdict_pass,
                grader_pass: record.strict_pass,
            });
    }
    per_slot
        .into_iter()
        .filter_map(|(letter, runs)| {
            crate::audit::confusion(&runs).ok().map(|s| (letter, s))
        })
        .collect()
}

/// Mean pass rate over the grid configs that fix `role` to `family`
/// (f^2 configs on a complete f-family grid).
pub fn role_marginal(
    run_ledger: &RunLedger,
    registry: &FamilyRegistry,
    role: Role,
    family: char,
    rng_seed: u64,
) -> Result<RoleMarginal, RunnerError> {
    let mut per_config: Vec<f64> = Vec::new();
    for config in run_ledger.configs() {
        let Ok(code) = parse_config(&config, registry) else {
            continue;
        };
        if code.family_for(role) != Some(family) {
            continue;
        }
        let agg = run_ledger.aggregate_config(&config, false);
        per_config.push(agg.strict_rate);
    }
    if per_config.is_empty() {
        return Err(RunnerError::NoGridRecords);
    }
    let expected = registry.letters().len().pow(2);
    let mean = per_config.iter().sum::<f64>() / per_config.len() as f64;
    let ci95 = (per_config.len() >= 2).then(|| {
        stats::paired_bootstrap(&per_config, 2000, rng_seed)
            .expect("two or more configs")
            .ci95
    });
    Ok(RoleMarginal {
        role,
        family,
        mean_pass_rate: mean,
        configs_observed: per_config.len(),
        ci95,
        incomplete_grid: per_config.len() < expected,
    })
}

/// Orchestrates materialization, sessions, grading, traces, and ledger rows
/// under one output directory.
pub struct Harness {
    pub out_dir: PathBuf,
    pub registry: TemplateRegistry,
    pub families: FamilyRegistry,
    pub mode: EnforcementMode,
    pub seed_mode: SeedMode,
    pub turn_budget: u32,
    pub max_remediation_rounds: u32,
    pub usage: UsageLedger,
}

impl Harness {
    pub fn new(out_dir: &Path, mode: EnforcementMode) -> Self {
        Harness {
            out_dir: out_dir.to_path_buf(),
            registry: TemplateRegistry::builtin(),
            families: FamilyRegistry::default(),
            mode,
            seed_mode: SeedMode::Public,
            turn_budget: crate::session::DEFAULT_TURN_BUDGET,
            max_remediation_rounds: crate::session::DEFAULT_MAX_REMEDIATION_ROUNDS,
            usage: UsageLedger::default(),
        }
    }

    /// Materialize (or reuse) the bundle for one template/seed pair.
    pub fn instance(&self, template_id: &str, seed: u64) -> Result<TaskInstance, RunnerError> {
        let dest = self
            .out_dir
            .join("bundles")
            .join(format!("{template_id}@{seed}"));
        if dest.join("task.json").is_file() {
            return Ok(TaskInstance::load(&dest)?);
        }
        Ok(materialize(
            &self.registry,
            template_id,
            seed,
            self.seed_mode,
            &dest,
        )?)
    }

    fn settings(&self) -> RunSettings {
        RunSettings {
            out_dir: self.out_dir.clone(),
            mode: self.mode,
            turn_budget: self.turn_budget,
            max_remediation_rounds: self.max_remediation_rounds,
        }
    }

    /// Run one session, grade it, persist the trace, and produce the ledger
    /// row. Infrastructure terminations and grader crashes become failures,
    /// never dropped rows.
    pub fn run_one(
        &mut self,
        instance: &TaskInstance,
        condition: Condition,
        config_label: &str,
        session_id: &str,
        backends: &mut BTreeMap<Role, Box<dyn Backend>>,
    ) -> Result<(RunRecord, SessionResult, Option<GradeResult>), RunnerError> {
        let (record, result, grade, usage) = execute_run(
            &self.settings(),
            instance,
            condition,
            config_label,
            session_id,
            backends,
        )?;
        self.usage.merge(&usage);
        Ok((record, result, grade))
    }

    /// Run the five-condition ablation over templates x seeds with scripted
    /// backends. All five conditions share each task's bundle seed (paired
    /// design).
    pub fn ablate_scripted(
        &mut self,
        template_ids: &[String],
        seeds: &[u64],
        scenario: Scenario,
    ) -> Result<Vec<RunRecord>, RunnerError> {
        let mut records = Vec::new();
        for template_id in template_ids {
            for seed in seeds {
                let instance = self.instance(template_id, *seed)?;
                for condition in Condition::ALL {
                    let session_id = format!(
                        "{}@{}:{}:{}",
                        template_id,
                        seed,
                        condition.as_str(),
                        self.mode.as_str()
                    );
                    let mut backends = scripted_backends(&instance, condition, scenario);
                    let (record, _, _) = self.run_one(
                        &instance,
                        condition,
                        condition.as_str(),
                        &session_id,
                        &mut backends,
                    )?;
                    records.push(record);
                }
            }
        }
        Ok(records)
    }

    /// Run a cross-provider grid with scripted backends priced per family.
    ///
    /// Sessions are scheduled onto a bounded worker pool; they share nothing
    /// but the read-only bundles, and each returns a usage-ledger fragment
    /// merged deterministically by key, so the final state is
    /// schedule-independent.
    pub fn grid_scripted(
        &mut self,
        spec: &GridSpec,
        scenario: Scenario,
        workers: usize,
    ) -> Result<Vec<RunRecord>, RunnerError> {
        let plan = enumerate_grid(spec)?;
        // Family letters must price; silent zero-cost fallbacks would corrupt
        // the cost ledger.
        for letter in &spec.families {
            if !self.families.contains(*letter) {
                return Err(RunnerError::UnknownFamily {
                    letter: *letter,
                    code: format!("grid families {:?}", spec.families),
                });
            }
        }
        // Materialize every (task, seed) bundle up front, once.
        let mut instances: BTreeMap<(String, u64), TaskInstance> = BTreeMap::new();
        for run in &plan {
            if let std::collections::btree_map::Entry::Vacant(slot) =
                instances.entry((run.task.clone(), run.seed))
            {
                slot.insert(self.instance(&run.task, run.seed)?);
            }
        }

        let settings = self.settings();
        let families = self.families.clone();
        let workers = workers.max(1).min(plan.len().max(1));
        let next_job = std::sync::atomic::AtomicUsize::new(0);

        let run_job = |run: &PlannedRun| -> Result<(RunRecord, UsageLedger), RunnerError> {
            let instance = &instances[&(run.task.clone(), run.seed)];
            let code = run.code.to_string();
            let session_id = format!("{code}:{}@{}", run.task, run.seed);
            let mut backends: BTreeMap<Role, Box<dyn Backend>> = BTreeMap::new();
            for (role, behavior) in scripts_for(instance, Condition::FullTeam, scenario) {
                let letter = run.code.family_for(role).expect("full-team slots");
                let config = families
                    .config(letter)
                    .cloned()
                    .unwrap_or_else(BackendConfig::mock);
                backends.insert(
                    role,
                    Box::new(ScriptedBackend::new(behavior).with_config(config)),
                );
            }
            let (record, _, _, usage) = execute_run(
                &settings,
                instance,
                Condition::FullTeam,
                &code,
                &session_id,
                &mut backends,
            )?;
            Ok((record, usage))
        };

        let mut outputs: Vec<Result<(RunRecord, UsageLedger), RunnerError>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let index = next_job.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                            let Some(run) = plan.get(index) else {
                                break;
                            };
                            local.push(run_job(run));
                        }
                        local
                    })
                })
                .collect();
            for handle in handles {
                outputs.extend(handle.join().expect("grid worker panicked"));
            }
        });

        let mut records = Vec::with_capacity(outputs.len());
        for output in outputs {
            let (record, usage) = output?;
            self.usage.merge(&usage);
            records.push(record);
        }
        records.sort_by_key(|r| r.key());
        Ok(records)
    }
}

/// Everything a session execution needs besides the harness's mutable ledger,
/// so runs can execute on worker threads.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out_dir: PathBuf,
    pub mode: EnforcementMode,
    pub turn_budget: u32,
    pub max_remediation_rounds: u32,
}

/// Session + grading + trace persistence for one run, with a session-local
/// usage fragment for deterministic merging.
pub fn execute_run(
    settings: &RunSettings,
    instance: &TaskInstance,
    condition: Condition,
    config_label: &str,
    session_id: &str,
    backends: &mut BTreeMap<Role, Box<dyn Backend>>,
) -> Result<(RunRecord, SessionResult, Option<GradeResult>, UsageLedger), RunnerError> {
    let run_root = settings.out_dir.join("runs").join(sanitize(session_id));
    // Re-running a session id replaces its previous run; the ledger keeps
    // the latest write anyway.
    if run_root.exists() {
        std::fs::remove_dir_all(&run_root).map_err(|source| RunnerError::Io {
            path: run_root.clone(),
            source,
        })?;
    }
    let mut session_config = SessionConfig::new(session_id, condition, settings.mode);
    session_config.turn_budget = settings.turn_budget;
    session_config.max_remediation_rounds = settings.max_remediation_rounds;
    session_config.run_seed_label = instance.metadata.seed.to_string();

    let mut usage = UsageLedger::default();
    let result = run_session(instance, &run_root, &session_config, backends, &mut usage)?;

    let trace_path = settings
        .out_dir
        .join("traces")
        .join(format!("{}.ndjson", sanitize(session_id)));
    write_trace(&result, &trace_path)?;

    let attestation_path = result.bundle_dir.join("attestation.json");
    let attestation_arg = attestation_path.is_file().then_some(attestation_path);
    let run_instance = TaskInstance::load(&result.bundle_dir)?;
    let graded = run_grader(
        &run_instance,
        &result.workspace_dir,
        attestation_arg.as_deref(),
    );

    let infra_session = matches!(result.termination, TerminationReason::Infrastructure(_));
    let (strict, promoted, partial, grade, infra) = match graded {
        Ok(grade) if !infra_session => (
            grade.binary_pass,
            grade.promoted_pass,
            grade.partial,
            Some(grade),
            false,
        ),
        // Infrastructure failures keep their partial for reporting but count
        // as failures under both rules.
        Ok(grade) => (false, false, grade.partial, Some(grade), true),
        Err(_) => (false, false, 0.0, None, true),
    };

    let total_turns = result.trace.len();
    let flagged_turns = result
        .trace
        .iter()
        .filter(|t| !t.violations.is_empty())
        .count();
    let record = RunRecord {
        config: config_label.to_string(),
        task_id: instance.task_id(),
        seed: instance.metadata.seed,
        mode: settings.mode.as_str().to_string(),
        strict_pass: strict,
        promoted_pass: promoted,
        partial,
        cost_usd: usage.session_cost(session_id),
        tool_call_turns: tool_call_turns(&result),
        violation_rate: if total_turns == 0 {
            0.0
        } else {
            flagged_turns as f64 / total_turns as f64
        },
        attestation_present: result.attestation.is_some(),
        verdict_pass: result
            .attestation
            .as_ref()
            .map(|a| a.verdict == crate::session::Verdict::Pass),
        infra_failure: infra,
        trace_path: Some(trace_path.to_string_lossy().into_owned()),
    };
    Ok((record, result, grade, usage))
}

/// Build scripted backends for every role a condition needs.
pub fn scripted_backends(
    instance: &TaskInstance,
    condition: Condition,
    scenario: Scenario,
) -> BTreeMap<Role, Box<dyn Backend>> {
    scripts_for(instance, condition, scenario)
        .into_iter()
        .map(|(role, behavior)| {
            (
                role,
                Box::new(ScriptedBackend::new(behavior)) as Box<dyn Backend>,
            )
        })
        .collect()
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '@' || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
