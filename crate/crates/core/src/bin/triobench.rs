//! Command-line front end: materialize bundles, run sessions, ablations, and
//! grids, grade workspaces, audit graders, and emit reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 run-time failure, 3 audit-threshold
//! failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use triobench::audit::{
    confusion, discrimination, mutate_and_grade, sensitivity, MissingnessPolicy, VerdictOutcome,
};
use triobench::backend::{Backend, HttpBackend, UreqTransport};
use triobench::runner::report::{render_report, MissingnessRow, ReportInputs};
use triobench::runner::{
    enumerate_grid, parse_config, scripted_backends, ConfigCode, FamilyRegistry, GridSpec, Harness,
    RunLedger,
};
use triobench::sandbox::{EnforcementMode, Role};
use triobench::scenarios::Scenario;
use triobench::session::Condition;
use triobench::stats::{holm_bonferroni, mcnemar_exact, paired_bootstrap, wilson_ci_95};
use triobench::taskgen::{
    bundle_hash, materialize, validate_bundle, SeedMode, TaskInstance, TemplateFilter,
    TemplateRegistry,
};

#[derive(Parser)]
#[command(
    name = "triobench",
    version,
    about = "Role-separated agent evaluation harness"
)]
struct Cli {
    /// Enforcement regime for sessions.
    #[arg(long, global = true, default_value = "enforced", value_parser = parse_mode)]
    mode: EnforcementMode,
    /// Bundle seed (single-seed commands).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Per-role assistant-turn budget.
    #[arg(long, global = true, default_value_t = 30)]
    budget: u32,
    /// Max Verifier-triggered remediation rounds.
    #[arg(long, global = true, default_value_t = 1)]
    remediation: u32,
    /// Output directory for bundles, runs, traces, ledger, reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> Result<EnforcementMode, String> {
    match s {
        "prompt_only" => Ok(EnforcementMode::PromptOnly),
        "enforced" => Ok(EnforcementMode::Enforced),
        "enforced_shared_history" => Ok(EnforcementMode::EnforcedSharedHistory),
        _ => Err(format!(
            "unknown mode {s:?} (prompt_only|enforced|enforced_shared_history)"
        )),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a task bundle (or list templates).
    Gen(GenArgs),
    /// Run one session on a bundle.
    Run(RunArgs),
    /// Run the five-condition ablation over templates x seeds.
    Ablate(AblateArgs),
    /// Enumerate (and optionally run) the cross-provider grid.
    Grid(GridArgs),
    /// Grade a workspace snapshot against a bundle's grader.
    Grade(GradeArgs),
    /// Grader and verifier audits over a ledger or a bundle.
    Audit(AuditArgs),
    /// Render the report bundle from the ledger.
    Report(ReportArgs),
    /// Statistical kernel utilities.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Template id (see --list).
    #[arg(long)]
    template: Option<String>,
    /// Seed admission mode: public|leaderboard.
    #[arg(long, default_value = "public")]
    seed_mode: String,
    /// List templates instead of materializing.
    #[arg(long)]
    list: bool,
    /// Verify bundle layout and token asymmetry after writing.
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    template: String,
    /// solo|restricted|full_team|team_no_plan|team_no_evaluate
    #[arg(long, default_value = "full_team")]
    condition: String,
    /// scripted|http
    #[arg(long, default_value = "scripted")]
    backend: String,
    /// Scripted scenario: solve|remediation|misbehaving_verifier
    #[arg(long, default_value = "solve")]
    scenario: String,
    /// Role-to-family assignment for http backends, e.g. PGEAVO.
    #[arg(long)]
    config_code: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    /// Comma-separated template ids; defaults to all built-ins.
    #[arg(long)]
    templates: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long, default_value = "solve")]
    scenario: String,
}

#[derive(Args)]
struct GridArgs {
    /// Family letters, e.g. AGO.
    #[arg(long, default_value = "AGO")]
    families: String,
    #[arg(long)]
    templates: Option<String>,
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    /// Print the plan without running sessions.
    #[arg(long)]
    plan_only: bool,
    #[arg(long, default_value = "solve")]
    scenario: String,
    /// Worker pool size for grid sessions.
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

#[derive(Args)]
struct GradeArgs {
    /// Bundle directory holding grade.sh and task.json.
    #[arg(long)]
    bundle: PathBuf,
    /// Workspace snapshot to grade; defaults to the bundle's workspace.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Attestation file; defaults to the bundle's attestation.json if present.
    #[arg(long)]
    attestation: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(subcommand)]
    kind: AuditKind,
}

#[derive(Subcommand)]
enum AuditKind {
    /// Verifier-verdict vs grader confusion over the ledger, with
    /// missingness sensitivity.
    Confusion,
    /// Mutation-test a template's grader against a scripted passing
    /// workspace. Exits 3 when the kill rate misses the threshold.
    Mutation {
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        mutation_seed: u64,
    },
    /// Per-task pass-rate spread across grid configs sharing a task.
    Discrimination,
    /// Check bundle layout and critical-token asymmetry.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Score basis for necessity summaries: partial | binary.
    #[arg(long, default_value = "partial")]
    score_basis: String,
}

#[derive(Args)]
struct StatsArgs {
    #[command(subcommand)]
    kind: StatsKind,
}

#[derive(Subcommand)]
enum StatsKind {
    /// Wilson 95% interval for successes/trials.
    Wilson { successes: u64, trials: u64 },
    /// Holm-Bonferroni adjustment of raw p-values.
    Holm { raw: Vec<f64> },
    /// Exact two-sided McNemar on discordant counts.
    Mcnemar { b: u64, c: u64 },
    /// Paired bootstrap over per-task differences.
    Bootstrap {
        #[arg(long, default_value_t = 10000)]
        iterations: u32,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        diffs: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are success paths; real parse errors are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            if e.is::<UsageError>() {
                eprintln!("usage error: {e}");
                ExitCode::from(1)
            } else {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut harness = Harness::new(&cli.out, cli.mode);
    harness.turn_budget = cli.budget;
    harness.max_remediation_rounds = cli.remediation;

    match cli.command {
        Command::Gen(args) => {
            if args.list {
                let registry = TemplateRegistry::builtin();
                for summary in registry.list(TemplateFilter::default()) {
                    println!(
                        "{:<12} {:?} {:?} checks={}",
                        summary.template_id,
                        summary.category,
                        summary.difficulty,
                        summary.check_count
                    );
                }
                return Ok(ExitCode::SUCCESS);
            }
            let template = args
                .template
                .ok_or_else(|| usage("gen needs --template or --list"))?;
            let seed_mode = match args.seed_mode.as_str() {
                "public" => SeedMode::Public,
                "leaderboard" => SeedMode::Leaderboard,
                other => return Err(usage(format!("unknown seed mode {other:?}"))),
            };
            let registry = TemplateRegistry::builtin();
            let dest = cli
                .out
                .join("bundles")
                .join(format!("{template}@{}", cli.seed));
            let instance = materialize(&registry, &template, cli.seed, seed_mode, &dest)?;
            println!("bundle: {}", instance.bundle_root.display());
            println!("hash:   {}", bundle_hash(&instance.bundle_root)?);
            if args.validate {
                let report = validate_bundle(&instance.bundle_root);
                if report.is_clean() {
                    println!("validation: clean");
                } else {
                    for finding in &report.findings {
                        println!("finding: {:?} {}", finding.code, finding.detail);
                    }
                    return Ok(ExitCode::from(3));
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Run(args) => {
            let condition = Condition::parse(&args.condition)
                .ok_or_else(|| usage(format!("unknown condition {:?}", args.condition)))?;
            let instance = harness.instance(&args.template, cli.seed)?;
            let session_id = format!(
                "{}@{}:{}:{}",
                args.template,
                cli.seed,
                condition.as_str(),
                cli.mode.as_str()
            );
            let mut backends = match args.backend.as_str() {
                "scripted" => {
                    let scenario = Scenario::parse(&args.scenario)
                        .ok_or_else(|| usage(format!("unknown scenario {:?}", args.scenario)))?;
                    scripted_backends(&instance, condition, scenario)
                }
                "http" => http_backends(&harness.families, condition, args.config_code.as_deref())?,
                other => return Err(usage(format!("unknown backend {other:?}"))),
            };
            let (record, result, grade) = harness.run_one(
                &instance,
                condition,
                condition.as_str(),
                &session_id,
                &mut backends,
            )?;
            RunLedger::append_to_file(&ledger_path(&cli.out), std::slice::from_ref(&record))?;
            println!("session:   {session_id}");
            println!("turns:     {}", result.trace.len());
            println!("tool-call: {}", record.tool_call_turns);
            println!("partial:   {:.3}", record.partial);
            println!("strict:    {}", record.strict_pass);
            println!("promoted:  {}", record.promoted_pass);
            if let Some(grade) = grade {
                for check in &grade.checks {
                    println!(
                        "  check {:<28} {}",
                        check.name,
                        if check.pass { "pass" } else { "FAIL" }
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Ablate(args) => {
            let scenario = Scenario::parse(&args.scenario)
                .ok_or_else(|| usage(format!("unknown scenario {:?}", args.scenario)))?;
            let templates = split_templates(args.templates.as_deref());
            let seeds = split_seeds(&args.seeds)?;
            let records = harness.ablate_scripted(&templates, &seeds, scenario)?;
            RunLedger::append_to_file(&ledger_path(&cli.out), &records)?;
            println!(
                "ablation complete: {} sessions over {} templates x {} seeds x 5 conditions",
                records.len(),
                templates.len(),
                seeds.len()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Grid(args) => {
            let spec = GridSpec {
                families: args.families.chars().collect(),
                tasks: split_templates(args.templates.as_deref()),
                seeds: split_seeds(&args.seeds)?,
            };
            let plan = enumerate_grid(&spec)?;
            println!(
                "grid plan: {} configs x {} tasks x {} seeds = {} runs",
                spec.families.len().pow(3),
                spec.tasks.len(),
                spec.seeds.len(),
                plan.len()
            );
            if args.plan_only {
                for run in plan.iter().take(10) {
                    println!("  {} {}@{}", run.code, run.task, run.seed);
                }
                if plan.len() > 10 {
                    println!("  ... {} more", plan.len() - 10);
                }
                return Ok(ExitCode::SUCCESS);
            }
            let scenario = Scenario::parse(&args.scenario)
                .ok_or_else(|| usage(format!("unknown scenario {:?}", args.scenario)))?;
            let records = harness.grid_scripted(&spec, scenario, args.workers)?;
            RunLedger::append_to_file(&ledger_path(&cli.out), &records)?;
            println!("grid complete: {} runs recorded", records.len());
            Ok(ExitCode::SUCCESS)
        }

        Command::Grade(args) => {
            let instance = TaskInstance::load(&args.bundle)?;
            let workspace = args
                .workspace
                .unwrap_or_else(|| args.bundle.join("workspace"));
            let attestation = args.attestation.or_else(|| {
                let default = args.bundle.join("attestation.json");
                default.is_file().then_some(default)
            });
            let grade =
                triobench::grading::run_grader(&instance, &workspace, attestation.as_deref())?;
            for check in &grade.checks {
                println!(
                    "check {:<28} {}",
                    check.name,
                    if check.pass { "pass" } else { "FAIL" }
                );
            }
            println!("partial:  {:.3}", grade.partial);
            println!("strict:   {}", grade.binary_pass);
            println!("promoted: {}", grade.promoted_pass);
            Ok(if grade.binary_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }

        Command::Audit(args) => audit_command(&cli.out, &mut harness, args),

        Command::Report(args) => {
            let use_binary = match args.score_basis.as_str() {
                "partial" => false,
                "binary" => true,
                other => return Err(usage(format!("unknown score basis {other:?}"))),
            };
            let ledger = RunLedger::load(&ledger_path(&cli.out))?;
            let inputs = assemble_report_inputs(&ledger, use_binary);
            let (text, json) = render_report(
                &ledger,
                &harness.families,
                &inputs,
                cli.budget,
                cli.remediation,
            );
            let report_dir = cli.out.join("reports");
            fs::create_dir_all(&report_dir)?;
            fs::write(report_dir.join("report.txt"), &text)?;
            fs::write(
                report_dir.join("report.json"),
                serde_json::to_string_pretty(&json)?,
            )?;
            println!("{text}");
            println!("written: {}", report_dir.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Stats(args) => {
            match args.kind {
                StatsKind::Wilson { successes, trials } => {
                    let ci = wilson_ci_95(successes, trials)?;
                    println!(
                        "wilson 95%: [{:.4}, {:.4}]  ([{:.1}%, {:.1}%])",
                        ci.lo,
                        ci.hi,
                        ci.lo * 100.0,
                        ci.hi * 100.0
                    );
                }
                StatsKind::Holm { raw } => {
                    let adjusted = holm_bonferroni(&raw);
                    for (raw_p, adj) in raw.iter().zip(adjusted.iter()) {
                        println!("raw {raw_p:.6} -> adjusted {adj:.6}");
                    }
                }
                StatsKind::Mcnemar { b, c } => {
                    println!("exact two-sided p = {:.10}", mcnemar_exact(b, c));
                }
                StatsKind::Bootstrap {
                    iterations,
                    rng_seed,
                    diffs,
                } => {
                    let result = paired_bootstrap(&diffs, iterations, rng_seed)?;
                    println!(
                        "mean {:+.4}  p {:.4}  ci95 [{:+.4}, {:+.4}]",
                        result.mean, result.two_sided_p, result.ci95.0, result.ci95.1
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn audit_command(
    out: &Path,
    harness: &mut Harness,
    args: AuditArgs,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match args.kind {
        AuditKind::Confusion => {
            let ledger = RunLedger::load(&ledger_path(out))?;
            let runs: Vec<VerdictOutcome> = ledger
                .records()
                .map(|r| VerdictOutcome {
                    verdict: r.verdict_pass,
                    grader_pass: r.strict_pass,
                })
                .collect();
            let summary = confusion(&runs)?;
            println!("{}", triobench::runner::report::confusion_table(&summary));
            let by_slot =
                triobench::runner::confusion_by_verifier_slot(&ledger, &harness.families);
            for (letter, slot_summary) in &by_slot {
                println!("verifier slot {letter}:");
                println!(
                    "{}",
                    triobench::runner::report::confusion_table(slot_summary)
                );
            }
            let total = ledger.len() as u64;
            for policy in [
                MissingnessPolicy::TreatAsFailVerdict,
                MissingnessPolicy::CountAsVerifierFailure,
            ] {
                let rate = sensitivity(&summary.matrix, summary.missing, total, policy)?;
                println!(
                    "{policy:?}: {}",
                    rate.value
                        .map(|v| format!("{:.1}%", v * 100.0))
                        .unwrap_or_else(|| format!("undef (n={})", rate.denominator))
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        AuditKind::Mutation {
            template,
            count,
            mutation_seed,
        } => {
            // Build a known-passing workspace with the scripted solo solver.
            let instance = harness.instance(&template, 0)?;
            let mut backends = scripted_backends(&instance, Condition::Solo, Scenario::Solve);
            let session_id = format!("{template}@0:mutation-baseline");
            let (record, result, _) = harness.run_one(
                &instance,
                Condition::Solo,
                "mutation-baseline",
                &session_id,
                &mut backends,
            )?;
            if !record.strict_pass {
                return Err("scripted baseline did not pass the grader".into());
            }
            let run_instance = TaskInstance::load(&result.bundle_dir)?;
            let report = mutate_and_grade(
                &run_instance,
                &result.workspace_dir,
                Some(&result.bundle_dir.join("attestation.json")),
                mutation_seed,
                count,
            )?;
            for mutant in &report.mutants {
                println!(
                    "mutant {:<24} {:?} {}",
                    mutant.location,
                    mutant.operator,
                    if mutant.killed { "killed" } else { "SURVIVED" }
                );
            }
            println!("kill rate: {:.3}", report.kill_rate);
            if report.exempt {
                println!("exempt: {}", report.note.as_deref().unwrap_or(""));
                return Ok(ExitCode::SUCCESS);
            }
            if let Some(note) = &report.note {
                println!("note: {note}");
            }
            println!(
                "verdict: {}",
                if report.verdict_pass { "pass" } else { "fail" }
            );
            Ok(if report.verdict_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        AuditKind::Discrimination => {
            let ledger = RunLedger::load(&ledger_path(out))?;
            let mut outcomes: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            let mut counts: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
            for record in ledger.records() {
                let slot = counts
                    .entry((record.config.clone(), record.task_id.clone()))
                    .or_insert((0, 0));
                slot.0 += u64::from(record.strict_pass);
                slot.1 += 1;
            }
            for ((config, task), (passes, runs)) in counts {
                outcomes
                    .entry(config)
                    .or_default()
                    .insert(task, passes as f64 / runs as f64);
            }
            let report = discrimination(&outcomes)?;
            for task in &report.per_task {
                println!(
                    "{:<20} spread {:.2} {}",
                    task.task_id,
                    task.spread,
                    if task.flagged { "FLAGGED" } else { "ok" }
                );
            }
            println!(
                "eligible: {} / {}",
                report.eligible_count,
                report.per_task.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        AuditKind::Validate { bundle } => {
            let report = validate_bundle(&bundle);
            if report.is_clean() {
                println!("validation: clean");
                Ok(ExitCode::SUCCESS)
            } else {
                for finding in &report.findings {
                    println!("finding: {:?} {}", finding.code, finding.detail);
                }
                Ok(ExitCode::from(3))
            }
        }
    }
}

fn assemble_report_inputs(ledger: &RunLedger, binary_scores: bool) -> ReportInputs {
    let mut inputs = ReportInputs::default();

    // Condition scores by task, when the ablation conditions are present.
    // Partial scores by default; the binary basis feeds pass/fail instead.
    let mut by_task: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for record in ledger.records() {
        if Condition::parse(&record.config).is_some() {
            let score = if binary_scores {
                f64::from(u8::from(record.strict_pass))
            } else {
                record.partial
            };
            by_task
                .entry(record.task_id.clone())
                .or_default()
                .insert(record.config.clone(), score);
        }
    }
    for (task_id, by_condition) in by_task {
        let all = [
            "solo",
            "restricted",
            "full_team",
            "team_no_plan",
            "team_no_evaluate",
        ];
        if all.iter().all(|c| by_condition.contains_key(*c)) {
            inputs
                .condition_scores
                .push(triobench::metrics::ConditionScores {
                    task_id,
                    s_solo: by_condition["solo"],
                    s_restricted: by_condition["restricted"],
                    s_full: by_condition["full_team"],
                    s_no_plan: by_condition["team_no_plan"],
                    s_no_verify: by_condition["team_no_evaluate"],
                });
        }
    }
    if inputs.condition_scores.len() >= 5 {
        inputs.quintiles =
            triobench::metrics::quintile_uplift(&inputs.condition_scores, 2000, 17).ok();
    }

    // Enforcement comparison renders once at least two modes are present.
    let modes = ledger.modes();
    if modes.len() >= 2 {
        for mode in modes {
            let rows: Vec<_> = ledger.for_mode(&mode).collect();
            let n = rows.len();
            let passes = rows.iter().filter(|r| r.strict_pass).count();
            let violation_rates: Vec<f64> = rows.iter().map(|r| r.violation_rate).collect();
            let mean_violation = violation_rates.iter().sum::<f64>() / n.max(1) as f64;
            inputs
                .enforcement
                .push(triobench::runner::report::EnforcementRow {
                    mode,
                    pass_rate: passes as f64 / n.max(1) as f64,
                    pass_ci: wilson_ci_95(passes as u64, n as u64).ok(),
                    violation_rate: mean_violation,
                    violation_ci: (n >= 2)
                        .then(|| paired_bootstrap(&violation_rates, 2000, 23).ok())
                        .flatten()
                        .map(|b| b.ci95),
                    n,
                });
        }
    }

    let runs: Vec<VerdictOutcome> = ledger
        .records()
        .map(|r| VerdictOutcome {
            verdict: r.verdict_pass,
            grader_pass: r.strict_pass,
        })
        .collect();
    if !runs.is_empty() {
        if let Ok(summary) = confusion(&runs) {
            let total = ledger.len() as u64;
            inputs.missingness = Some(MissingnessRow {
                missing: summary.missing,
                total_runs: total,
                treat_as_fail: sensitivity(
                    &summary.matrix,
                    summary.missing,
                    total,
                    MissingnessPolicy::TreatAsFailVerdict,
                )
                .expect("counts from one ledger are consistent"),
                verifier_failure_overall: sensitivity(
                    &summary.matrix,
                    summary.missing,
                    total,
                    MissingnessPolicy::CountAsVerifierFailure,
                )
                .expect("counts from one ledger are consistent"),
            });
            inputs.confusion = Some(summary);
        }
    }
    inputs
}

fn http_backends(
    families: &FamilyRegistry,
    condition: Condition,
    config_code: Option<&str>,
) -> Result<BTreeMap<Role, Box<dyn Backend>>, Box<dyn std::error::Error>> {
    let code: ConfigCode = match config_code {
        Some(raw) => parse_config(raw, families)?,
        None => return Err(usage("http backend needs --config-code (e.g. PGEAVO)")),
    };
    let mut backends: BTreeMap<Role, Box<dyn Backend>> = BTreeMap::new();
    for role in condition.roles() {
        // Single-agent pseudo-roles take the executor slot's family.
        let letter = code.family_for(*role).unwrap_or(code.executor);
        let mut config = families
            .config(letter)
            .cloned()
            .ok_or_else(|| usage(format!("family {letter} not registered")))?;
        if let Ok(endpoint) = std::env::var(format!("TB_ENDPOINT_{letter}")) {
            config.endpoint = endpoint;
        }
        if let Ok(model) = std::env::var(format!("TB_MODEL_{letter}")) {
            config.model = model;
        }
        let api_key = std::env::var(format!("TB_API_KEY_{letter}"))
            .map_err(|_| usage(format!("TB_API_KEY_{letter} is not set")))?;
        backends.insert(
            *role,
            Box::new(HttpBackend::new(config, api_key, UreqTransport)),
        );
    }
    Ok(backends)
}

fn ledger_path(out: &Path) -> PathBuf {
    out.join("ledger").join("records.ndjson")
}

fn split_templates(raw: Option<&str>) -> Vec<String> {
    match raw {
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
        None => vec![
            "demo_relay".to_string(),
            "demo_trap".to_string(),
            "demo_open".to_string(),
        ],
    }
}

fn split_seeds(raw: &str) -> Result<Vec<u64>, Box<dyn std::error::Error>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|e| usage(e.to_string())))
        .collect()
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> Box<dyn std::error::Error> {
    Box::new(UsageError(message.into()))
}
