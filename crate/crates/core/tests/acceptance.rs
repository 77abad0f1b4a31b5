//! Acceptance suite: one test per release criterion, each printing a
//! criterion line on success. Everything here is hermetic (scripted backends,
//! no network) and pinned to the tolerances the criteria state.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use triobench::audit::{
    mutate_and_grade, sensitivity, summarize, ConfusionMatrix, MissingnessPolicy, MutantRecord,
    MutationOperator, MutationReport,
};
use triobench::backend::{pass_per_dollar, Backend, ScriptedBackend, UsageLedger};
use triobench::grading::{
    apply_promotion, run_grader, CheckKind, CheckResult, GradeResult, PromotionRule,
    ATTESTATION_CHECK_NAME,
};
use triobench::metrics::{classify, tni, ConditionScores, TaskClass, TNI_EPSILON};
use triobench::runner::{
    enumerate_grid, pareto, parse_config, FamilyRegistry, GridSpec, ParetoPoint,
};
use triobench::sandbox::{
    canonical_matrix, EnforcementMode, Gate, Resource, Role, ToolAction, ToolRequest, ViolationKind,
};
use triobench::scenarios::{scripts_for, Scenario};
use triobench::session::{
    matches_phase_grammar, phase_role_sequence, run_session, Condition, SessionConfig,
    SessionResult, Verdict,
};
use triobench::stats::{holm_bonferroni, mcnemar_exact, paired_bootstrap, wilson_ci_95};
use triobench::taskgen::{
    bundle_hash, materialize, normalize_tokens, SeedMode, TaskGenError, TaskInstance,
    TemplateRegistry,
};

fn pass(criterion: u32, name: &str) {
    println!("criterion {criterion:>2} [{name}]: PASS");
}

/// Criterion 1: the gate agrees with the canonical permission table on every
/// (role, action, resource) cell in enforced mode, and separation of duties
/// holds for every condition except Solo. Runtime under one second.
#[test]
fn criterion_01_permission_matrix_conformance() {
    let started = Instant::now();

    // Independent transcription of the canonical table: (role, resource) ->
    // (read, write). Execute is modeled as the write bit of its cell.
    type TableRow = (Role, &'static [(Resource, bool, bool)]);
    let mut expected: BTreeMap<(Role, Resource), (bool, bool)> = BTreeMap::new();
    let rows: &[TableRow] = &[
        (
            Role::Planner,
            &[
                (Resource::Spec, true, false),
                (Resource::Brief, true, false),
                (Resource::Workspace, false, false),
                (Resource::Messages, true, true),
                (Resource::Reports, false, false),
                (Resource::Attestation, false, false),
                (Resource::Execute, false, false),
            ],
        ),
        (
            Role::Executor,
            &[
                (Resource::Spec, false, false),
                (Resource::Brief, true, false),
                (Resource::Workspace, true, true),
                (Resource::Messages, true, true),
                (Resource::Reports, true, true),
                (Resource::Attestation, false, false),
                (Resource::Execute, true, true),
            ],
        ),
        (
            Role::Verifier,
            &[
                (Resource::Spec, true, false),
                (Resource::Brief, false, false),
                (Resource::Workspace, true, false),
                (Resource::Messages, true, true),
                (Resource::Reports, true, false),
                (Resource::Attestation, true, true),
                (Resource::Execute, false, false),
            ],
        ),
        (
            Role::Solo,
            &[
                (Resource::Spec, true, true),
                (Resource::Brief, true, true),
                (Resource::Workspace, true, true),
                (Resource::Messages, true, true),
                (Resource::Reports, true, true),
                (Resource::Attestation, true, true),
                (Resource::Execute, true, true),
            ],
        ),
        (
            Role::Restricted,
            &[
                (Resource::Spec, false, false),
                (Resource::Brief, true, false),
                (Resource::Workspace, true, true),
                (Resource::Messages, true, true),
                (Resource::Reports, true, true),
                (Resource::Attestation, false, false),
                (Resource::Execute, true, true),
            ],
        ),
    ];
    for (role, cells) in rows {
        for (resource, read, write) in *cells {
            expected.insert((*role, *resource), (*read, *write));
        }
    }

    let sample_path = |resource: Resource| -> Option<&'static str> {
        match resource {
            Resource::Spec => Some("spec.md"),
            Resource::Brief => Some("brief.md"),
            Resource::Workspace => Some("workspace/app.py"),
            Resource::Messages => Some("messages/0001_planner_executor.md"),
            Resource::Reports => Some("reports/log.md"),
            Resource::Attestation => Some("attestation.json"),
            Resource::Execute => None,
        }
    };

    let gate = Gate::new(
        canonical_matrix(),
        EnforcementMode::Enforced,
        "/bundle".into(),
    );
    let mut disagreements = 0;
    for role in Role::ALL {
        for resource in Resource::ALL {
            let (want_read, want_write) = expected[&(role, resource)];
            match sample_path(resource) {
                Some(path) => {
                    let read = gate.check(&ToolRequest {
                        role,
                        action: ToolAction::Read {
                            path: path.to_string(),
                        },
                    });
                    let write = gate.check(&ToolRequest {
                        role,
                        action: ToolAction::Write {
                            path: path.to_string(),
                            content: String::new(),
                        },
                    });
                    if read.allowed != want_read || write.allowed != want_write {
                        disagreements += 1;
                    }
                }
                None => {
                    let run = gate.check(&ToolRequest {
                        role,
                        action: ToolAction::Run {
                            command: "true".to_string(),
                        },
                    });
                    if run.allowed != want_write {
                        disagreements += 1;
                    }
                }
            }
            // The send_message tool rides on the messages cell's write bit.
            if resource == Resource::Messages {
                let send = gate.check(&ToolRequest {
                    role,
                    action: ToolAction::SendMessage {
                        to: Role::Executor,
                        body: "ping".to_string(),
                    },
                });
                if send.allowed != want_write {
                    disagreements += 1;
                }
            }
        }
    }
    assert_eq!(disagreements, 0, "gate disagrees with the canonical table");

    // Separation of duties per condition: no role except Solo holds spec
    // read + workspace write + attestation write.
    for condition in Condition::ALL {
        let matrix = condition.effective_matrix();
        for role in condition.roles() {
            let breaks = matrix.breaks_separation_of_duties(*role);
            assert_eq!(
                breaks,
                *role == Role::Solo,
                "{condition:?}/{role} separation of duties"
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, "permission-matrix conformance");
}

/// Criterion 2: confusion arithmetic reproduces the reference counts to one
/// decimal, and the Wilson CI on 384/778 lands on [45.9, 52.9] within 0.1
/// percentage points per endpoint.
#[test]
fn criterion_02_confusion_arithmetic() {
    let cases: &[(&str, ConfusionMatrix, f64, f64, f64)] = &[
        (
            "pooled",
            ConfusionMatrix::new(285, 384, 20, 394),
            62.7,
            49.4,
            6.6,
        ),
        (
            "loosest-verifier-slot",
            ConfusionMatrix::new(70, 87, 16, 26),
            48.2,
            77.0,
            18.6,
        ),
        (
            "strictest-verifier-slot",
            ConfusionMatrix::new(117, 157, 4, 275),
            70.9,
            36.3,
            3.3,
        ),
    ];
    for (label, matrix, accuracy, false_accept, false_reject) in cases {
        let summary = summarize(*matrix, 0);
        let got_acc = summary.accuracy.expect_value() * 100.0;
        let got_fa = summary.false_accept.expect_value() * 100.0;
        let got_fr = summary.false_reject.expect_value() * 100.0;
        assert!(
            (got_acc - accuracy).abs() < 0.05,
            "{label} accuracy {got_acc}"
        );
        assert!((got_fa - false_accept).abs() < 0.05, "{label} FA {got_fa}");
        assert!((got_fr - false_reject).abs() < 0.05, "{label} FR {got_fr}");
    }

    let ci = wilson_ci_95(384, 778).unwrap();
    assert!((ci.lo * 100.0 - 45.9).abs() <= 0.1, "lo {}", ci.lo * 100.0);
    assert!((ci.hi * 100.0 - 52.9).abs() <= 0.1, "hi {}", ci.hi * 100.0);
    pass(2, "confusion arithmetic");
}

/// Criterion 3: missingness sensitivity lands on 22.3% and 66.5% within 0.1
/// percentage points using missing = 942 and total = 2025.
#[test]
fn criterion_03_missingness_sensitivity() {
    let pooled = ConfusionMatrix::new(285, 384, 20, 394);
    let treat = sensitivity(&pooled, 942, 2025, MissingnessPolicy::TreatAsFailVerdict)
        .unwrap()
        .expect_value()
        * 100.0;
    assert!((treat - 22.3).abs() <= 0.1, "treat-as-fail {treat}");
    let overall = sensitivity(
        &pooled,
        942,
        2025,
        MissingnessPolicy::CountAsVerifierFailure,
    )
    .unwrap()
    .expect_value()
        * 100.0;
    assert!(
        (overall - 66.5).abs() <= 0.1,
        "verifier-failure overall {overall}"
    );
    pass(3, "missingness sensitivity");
}

/// Criterion 4: the necessity-index kernel clamps at epsilon on the flat
/// worked-example tuple, is monotone in the team score over 1,000 random
/// tuples, and classifies exact band boundaries NEUTRAL. Under one second.
#[test]
fn criterion_04_tni_kernel() {
    let started = Instant::now();

    let flat = ConditionScores {
        task_id: "worked-example".into(),
        s_solo: 0.25,
        s_restricted: 0.25,
        s_full: 0.25,
        s_no_plan: 0.25,
        s_no_verify: 0.25,
    };
    let result = tni(&flat);
    assert!(!result.eligible);
    assert_eq!(result.value, 0.0);
    assert_eq!(result.epsilon, TNI_EPSILON);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let restricted: f64 = rng.random_range(0.0..0.8);
        let gap: f64 = rng.random_range(0.051..0.2);
        let solo = (restricted + gap).min(1.0);
        if solo - restricted <= TNI_EPSILON {
            continue;
        }
        let full_lo: f64 = rng.random_range(0.0..1.0);
        let bump: f64 = rng.random_range(0.0001..0.2);
        let full_hi = (full_lo + bump).min(1.0);
        if full_hi <= full_lo {
            continue;
        }
        let mk = |full: f64| ConditionScores {
            task_id: "prop".into(),
            s_solo: solo,
            s_restricted: restricted,
            s_full: full,
            s_no_plan: 0.0,
            s_no_verify: 0.0,
        };
        let lo = tni(&mk(full_lo));
        let hi = tni(&mk(full_hi));
        assert!(hi.value > lo.value, "monotonicity: {lo:?} !< {hi:?}");
    }

    for boundary_full in [0.55, 0.45] {
        let scores = ConditionScores {
            task_id: "boundary".into(),
            s_solo: 0.50,
            s_restricted: 0.50,
            s_full: boundary_full,
            s_no_plan: 0.0,
            s_no_verify: 0.0,
        };
        assert_eq!(classify(&scores, &tni(&scores)), TaskClass::Neutral);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(4, "necessity-index kernel");
}

/// Criterion 5: statistics kernel exact values and determinism.
#[test]
fn criterion_05_statistics_kernel() {
    let adjusted = holm_bonferroni(&[0.038, 0.45, 0.77]);
    assert!((adjusted[0] - 0.114).abs() < 1e-12);
    assert!((adjusted[1] - 0.90).abs() < 1e-12);
    assert!((adjusted[2] - 0.90).abs() < 1e-12);

    let p = mcnemar_exact(10, 0);
    assert!((p - 2.0 * 2f64.powi(-10)).abs() < 1e-12, "{p}");

    let diffs: Vec<f64> = (0..50)
        .map(|i| ((i * 37) % 23) as f64 / 23.0 - 0.4)
        .collect();
    let a = paired_bootstrap(&diffs, 3000, 99).unwrap();
    let b = paired_bootstrap(&diffs, 3000, 99).unwrap();
    assert_eq!(a, b, "bootstrap must be seed-deterministic");

    let zeros = vec![0.0; 40];
    let degenerate = paired_bootstrap(&zeros, 2000, 1).unwrap();
    assert_eq!(degenerate.two_sided_p, 1.0);
    assert_eq!(degenerate.mean, 0.0);
    pass(5, "statistics kernel");
}

/// Criterion 6: generation is deterministic across ten materializations for
/// seeds 0-2, seeds 0 and 1 differ in content but not file names, critical
/// tokens stay spec-only, and public mode rejects seed 5.
#[test]
fn criterion_06_taskgen_determinism() {
    let registry = TemplateRegistry::builtin();
    let tmp = TempDir::new().unwrap();
    for template in ["demo_relay", "demo_trap", "demo_open"] {
        for seed in [0u64, 1, 2] {
            let mut hashes = Vec::new();
            for round in 0..10 {
                let dest = tmp.path().join(format!("{template}-{seed}-{round}"));
                materialize(&registry, template, seed, SeedMode::Public, &dest).unwrap();
                hashes.push(bundle_hash(&dest).unwrap());
            }
            assert!(
                hashes.windows(2).all(|w| w[0] == w[1]),
                "{template}@{seed}: hash drift across runs"
            );
        }

        // Seeds 0 vs 1: same file-name set, at least one file differs.
        let template_obj = registry.get(template).unwrap();
        let b0 = template_obj.generate(0);
        let b1 = template_obj.generate(1);
        assert_eq!(
            b0.files.keys().collect::<Vec<_>>(),
            b1.files.keys().collect::<Vec<_>>()
        );
        assert!(b0.files.iter().any(|(k, v)| b1.files[k] != *v));

        // Critical-token asymmetry.
        for seed in [0u64, 1, 2] {
            let bundle = template_obj.generate(seed);
            let spec = normalize_tokens(&String::from_utf8_lossy(&bundle.files["spec.md"].content));
            let brief =
                normalize_tokens(&String::from_utf8_lossy(&bundle.files["brief.md"].content));
            let mut workspace = std::collections::BTreeSet::new();
            for (path, entry) in &bundle.files {
                if path.starts_with("workspace/") {
                    workspace.extend(normalize_tokens(&String::from_utf8_lossy(&entry.content)));
                }
            }
            for token in &bundle.critical_tokens {
                assert!(
                    spec.contains(token),
                    "{template}@{seed} {token} not in spec"
                );
                assert!(!brief.contains(token), "{template}@{seed} {token} in brief");
                assert!(
                    !workspace.contains(token),
                    "{template}@{seed} {token} in workspace"
                );
            }
        }
    }

    let rejected = materialize(
        &registry,
        "demo_relay",
        5,
        SeedMode::Public,
        &tmp.path().join("heldout"),
    );
    assert!(matches!(
        rejected,
        Err(TaskGenError::HeldOutSeed { seed: 5 })
    ));
    pass(6, "task generation determinism");
}

fn run_scripted(
    instance: &TaskInstance,
    condition: Condition,
    mode: EnforcementMode,
    scenario: Scenario,
    run_root: &Path,
    session_id: &str,
) -> SessionResult {
    let mut backends: BTreeMap<Role, Box<dyn Backend>> = scripts_for(instance, condition, scenario)
        .into_iter()
        .map(|(role, behavior)| {
            (
                role,
                Box::new(ScriptedBackend::new(behavior)) as Box<dyn Backend>,
            )
        })
        .collect();
    let mut ledger = UsageLedger::default();
    let mut config = SessionConfig::new(session_id, condition, mode);
    config.run_seed_label = instance.metadata.seed.to_string();
    run_session(instance, run_root, &config, &mut backends, &mut ledger).unwrap()
}

fn grade_result(result: &SessionResult) -> GradeResult {
    let instance = TaskInstance::load(&result.bundle_dir).unwrap();
    let attestation = result.bundle_dir.join("attestation.json");
    run_grader(
        &instance,
        &result.workspace_dir,
        attestation.is_file().then_some(attestation.as_path()),
    )
    .unwrap()
}

/// Criterion 7: hermetic end-to-end behavior with the scripted backend.
#[test]
fn criterion_07_hermetic_end_to_end() {
    let started = Instant::now();
    let registry = TemplateRegistry::builtin();
    let tmp = TempDir::new().unwrap();
    let instance = materialize(
        &registry,
        "demo_relay",
        0,
        SeedMode::Public,
        &tmp.path().join("bundle"),
    )
    .unwrap();

    // (a) Full team solves the relay task: grader pass with a valid
    // attestation authored by the Verifier.
    let solve = run_scripted(
        &instance,
        Condition::FullTeam,
        EnforcementMode::Enforced,
        Scenario::Solve,
        &tmp.path().join("run-solve"),
        "solve",
    );
    let grade = grade_result(&solve);
    assert!(grade.binary_pass, "{:?}", grade.checks);
    let attestation = solve.attestation.expect("verifier wrote attestation");
    assert_eq!(attestation.verdict, Verdict::Pass);
    assert_eq!(attestation.author_role.as_deref(), Some("verifier"));
    assert_eq!(attestation.task_id.as_deref(), Some("demo_relay@0"));

    // (b) Misbehaving Verifier: strictly more verifier-modifies-code events
    // under prompt-only than enforced on the same scripts.
    let misbehave_enforced = run_scripted(
        &instance,
        Condition::FullTeam,
        EnforcementMode::Enforced,
        Scenario::MisbehavingVerifier,
        &tmp.path().join("run-mis-enforced"),
        "mis-enforced",
    );
    let misbehave_prompt = run_scripted(
        &instance,
        Condition::FullTeam,
        EnforcementMode::PromptOnly,
        Scenario::MisbehavingVerifier,
        &tmp.path().join("run-mis-prompt"),
        "mis-prompt",
    );
    let enforced_events = misbehave_enforced.violation_count(ViolationKind::VerifierModifiesCode);
    let prompt_events = misbehave_prompt.violation_count(ViolationKind::VerifierModifiesCode);
    assert!(
        prompt_events > enforced_events,
        "prompt-only {prompt_events} must exceed enforced {enforced_events}"
    );
    assert!(enforced_events >= 1, "enforced still records the attempt");
    // Under enforcement the denied edit never reaches the workspace; under
    // prompt-only the rewrite lands.
    let enforced_config = std::fs::read_to_string(
        misbehave_enforced.workspace_dir.join("config.ini"),
    )
    .unwrap();
    assert!(!enforced_config.contains("rewritten by the verifier"));
    let prompt_config =
        std::fs::read_to_string(misbehave_prompt.workspace_dir.join("config.ini")).unwrap();
    assert!(prompt_config.contains("rewritten by the verifier"));

    // Well-behaved scripts: identical final pass outcomes across modes.
    let solve_prompt = run_scripted(
        &instance,
        Condition::FullTeam,
        EnforcementMode::PromptOnly,
        Scenario::Solve,
        &tmp.path().join("run-solve-prompt"),
        "solve-prompt",
    );
    let prompt_grade = grade_result(&solve_prompt);
    assert_eq!(grade.binary_pass, prompt_grade.binary_pass);
    assert_eq!(grade.partial, prompt_grade.partial);

    // (c) Remediation: fail verdict, one more Executor then Verifier phase.
    let remediation = run_scripted(
        &instance,
        Condition::FullTeam,
        EnforcementMode::Enforced,
        Scenario::Remediation,
        &tmp.path().join("run-remediation"),
        "remediation",
    );
    let phases = phase_role_sequence(&remediation.trace);
    assert_eq!(
        phases,
        vec![
            Role::Planner,
            Role::Executor,
            Role::Verifier,
            Role::Executor,
            Role::Verifier
        ],
        "phase grammar"
    );
    assert!(matches_phase_grammar(Condition::FullTeam, &phases));
    assert_eq!(remediation.remediation_rounds_used, 1);
    assert_eq!(remediation.prior_attestations.len(), 1);
    assert_eq!(remediation.prior_attestations[0].verdict, Verdict::Fail);
    let final_grade = grade_result(&remediation);
    assert!(final_grade.binary_pass, "{:?}", final_grade.checks);
    assert_eq!(
        remediation.attestation.map(|a| a.verdict),
        Some(Verdict::Pass)
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    pass(7, "hermetic end-to-end");
}

/// Criterion 8: grid plumbing counts, config-code round-trips, the reference
/// Pareto frontier shape, and pass-per-dollar.
#[test]
fn criterion_08_grid_plumbing() {
    let spec = GridSpec {
        families: vec!['A', 'G', 'O'],
        tasks: (0..25).map(|i| format!("task{i:02}")).collect(),
        seeds: vec![0, 1, 2],
    };
    let plan = enumerate_grid(&spec).unwrap();
    assert_eq!(plan.len(), 2025);

    let registry = FamilyRegistry::default();
    let mut distinct = std::collections::BTreeSet::new();
    for p in ['A', 'G', 'O'] {
        for e in ['A', 'G', 'O'] {
            for v in ['A', 'G', 'O'] {
                let code = format!("P{p}E{e}V{v}");
                let parsed = parse_config(&code, &registry).unwrap();
                assert_eq!(parsed.to_string(), code, "round trip");
                distinct.insert(code);
            }
        }
    }
    assert_eq!(distinct.len(), 27);

    let points = vec![
        ParetoPoint {
            config: "POEOVO".into(),
            pass_rate: 0.187,
            total_cost_usd: 2.09,
        },
        ParetoPoint {
            config: "PGEAVA".into(),
            pass_rate: 0.267,
            total_cost_usd: 20.52,
        },
        ParetoPoint {
            config: "PAEAVA".into(),
            pass_rate: 0.227,
            total_cost_usd: 39.58,
        },
    ];
    let frontier = pareto(&points);
    let configs: Vec<&str> = frontier.iter().map(|p| p.config.as_str()).collect();
    assert_eq!(
        configs,
        vec!["POEOVO", "PGEAVA"],
        "dominated point excluded"
    );

    let ppd = pass_per_dollar(0.187, 2.09).unwrap();
    assert!((ppd - 0.089).abs() <= 0.001, "{ppd}");
    pass(8, "grid plumbing");
}

/// Criterion 9: mutation audit on a shipped demo task with a known-passing
/// workspace; the 0.5 threshold gates the verdict; a 0.42 fixture fails.
#[test]
fn criterion_09_mutation_audit() {
    let registry = TemplateRegistry::builtin();
    let tmp = TempDir::new().unwrap();
    let instance = materialize(
        &registry,
        "demo_relay",
        0,
        SeedMode::Public,
        &tmp.path().join("bundle"),
    )
    .unwrap();

    // Produce the known-passing workspace with the scripted solo solver.
    let solo = run_scripted(
        &instance,
        Condition::Solo,
        EnforcementMode::Enforced,
        Scenario::Solve,
        &tmp.path().join("run-solo"),
        "solo-baseline",
    );
    let run_instance = TaskInstance::load(&solo.bundle_dir).unwrap();
    let attestation = solo.bundle_dir.join("attestation.json");
    let report = mutate_and_grade(
        &run_instance,
        &solo.workspace_dir,
        Some(&attestation),
        11,
        20,
    )
    .unwrap();
    assert!(!report.mutants.is_empty(), "a kill rate was computed");
    assert!(report.kill_rate > 0.0 && report.kill_rate <= 1.0);
    assert_eq!(
        report.verdict_pass,
        report.kill_rate >= 0.5,
        "threshold gates the verdict"
    );

    let fixture: Vec<MutantRecord> = (0..50)
        .map(|i| MutantRecord {
            operator: MutationOperator::ReturnFlip,
            location: format!("app.py:{i}"),
            killed: i < 21,
        })
        .collect();
    let fixture_report = MutationReport::from_mutants(fixture, None);
    assert!((fixture_report.kill_rate - 0.42).abs() < 1e-12);
    assert!(!fixture_report.verdict_pass, "0.42 fails the gate");
    pass(9, "mutation audit");
}

/// Criterion 10: the promotion rule promotes attestation-only failures while
/// keeping strict counts exactly recoverable.
#[test]
fn criterion_10_promotion_rule() {
    let mut checks: Vec<CheckResult> = (0..9)
        .map(|i| CheckResult {
            name: format!("structural_{i}"),
            pass: true,
            kind: CheckKind::Structural,
        })
        .collect();
    checks.push(CheckResult {
        name: ATTESTATION_CHECK_NAME.to_string(),
        pass: false,
        kind: CheckKind::Attestation,
    });
    let result = GradeResult::from_checks(checks, 1);
    assert!(!result.binary_pass, "strict fail");
    assert!(result.promoted_pass, "promoted pass");
    assert!(!apply_promotion(&result, PromotionRule::Strict));
    assert!(apply_promotion(&result, PromotionRule::AttestationPromoted));

    // Reversibility over an aggregate: strict counts recoverable exactly.
    let mut ledger = triobench::runner::RunLedger::default();
    let mk = |task: &str, strict: bool, promoted: bool| triobench::runner::RunRecord {
        config: "full_team".into(),
        task_id: task.into(),
        seed: 0,
        mode: "enforced".into(),
        strict_pass: strict,
        promoted_pass: promoted,
        partial: if strict { 1.0 } else { 0.9 },
        cost_usd: 0.0,
        tool_call_turns: 1,
        violation_rate: 0.0,
        attestation_present: strict,
        verdict_pass: Some(true),
        infra_failure: false,
        trace_path: None,
    };
    ledger.insert(mk("t1@0", true, true));
    ledger.insert(mk("t2@0", false, true));
    ledger.insert(mk("t3@0", false, false));
    let agg = ledger.aggregate_all(false);
    assert_eq!(agg.strict_passes, 1);
    assert_eq!(agg.promoted_passes, 2);
    // Strict never exceeds promoted, and both columns exist side by side.
    assert!(agg.strict_passes <= agg.promoted_passes);
    pass(10, "promotion rule");
}
