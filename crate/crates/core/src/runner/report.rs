//! Report emission: aligned-column text tables plus one structured JSON
//! document. Every aggregate that shows promoted verdicts shows strict
//! verdicts next to them, and the declared defaults print on every report so
//! runs are self-describing.

use serde_json::{json, Value};

use crate::audit::{ConfusionSummary, Rate};
use crate::backend::pass_per_dollar;
use crate::metrics::{class_counts, tni, ConditionScores, QuintileReport};
use crate::stats::Interval;

use super::ledger::RunLedger;
use super::{pareto, parse_config, FamilyRegistry, ParetoPoint};

/// Optional analysis sections alongside the ledger summary.
#[derive(Debug, Default)]
pub struct ReportInputs {
    pub condition_scores: Vec<ConditionScores>,
    pub confusion: Option<ConfusionSummary>,
    pub missingness: Option<MissingnessRow>,
    pub quintiles: Option<QuintileReport>,
    pub enforcement: Vec<EnforcementRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessRow {
    pub missing: u64,
    pub total_runs: u64,
    pub treat_as_fail: Rate,
    pub verifier_failure_overall: Rate,
}

/// One enforcement-comparison row: condition, pass rate with CI, per-run
/// violation rate with CI, n.
#[derive(Debug, Clone, PartialEq)]
pub struct EnforcementRow {
    pub mode: String,
    pub pass_rate: f64,
    pub pass_ci: Option<Interval>,
    pub violation_rate: f64,
    pub violation_ci: Option<(f64, f64)>,
    pub n: usize,
}

fn fmt_pct(x: f64) -> String {
    format!("{:5.1}%", x * 100.0)
}

fn fmt_rate(rate: &Rate) -> String {
    match rate.value {
        Some(v) => fmt_pct(v),
        None => format!("undef (n={})", rate.denominator),
    }
}

/// Per-condition (or per-config) summary with strict and promoted verdicts
/// side by side.
pub fn condition_table(ledger: &RunLedger) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9} {:>10} {:>6}\n",
        "config", "n", "strict", "rate", "promoted", "rate", "partial", "cost $", "infra"
    ));
    for config in ledger.configs() {
        let agg = ledger.aggregate_config(&config, false);
        out.push_str(&format!(
            "{:<18} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9.3} {:>10.4} {:>6}\n",
            config,
            agg.runs,
            agg.strict_passes,
            fmt_pct(agg.strict_rate),
            agg.promoted_passes,
            fmt_pct(agg.promoted_rate),
            agg.mean_partial,
            agg.total_cost_usd,
            agg.infra_failures,
        ));
    }
    let total = ledger.aggregate_all(false);
    out.push_str(&format!(
        "{:<18} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9.3} {:>10.4} {:>6}\n",
        "TOTAL",
        total.runs,
        total.strict_passes,
        fmt_pct(total.strict_rate),
        total.promoted_passes,
        fmt_pct(total.promoted_rate),
        total.mean_partial,
        total.total_cost_usd,
        total.infra_failures,
    ));
    out
}

/// Grid table over config-code rows, sorted by pass rate descending:
/// rank, roles, pass, partial, cost, pass/$, tool-call turns.
pub fn grid_table(ledger: &RunLedger, families: &FamilyRegistry) -> String {
    let mut rows: Vec<(String, super::Aggregate)> = ledger
        .configs()
        .into_iter()
        .filter(|c| parse_config(c, families).is_ok())
        .map(|c| {
            let agg = ledger.aggregate_config(&c, false);
            (c, agg)
        })
        .collect();
    rows.sort_by(|a, b| {
        b.1.strict_rate
            .partial_cmp(&a.1.strict_rate)
            .expect("rates are finite")
            .then(a.0.cmp(&b.0))
    });

    let mut out = String::new();
    out.push_str(&format!(
        "{:>4} {:<8} {:>7} {:>8} {:>9} {:>8} {:>7}\n",
        "rank", "roles", "pass", "partial", "cost $", "pass/$", "turns"
    ));
    for (rank, (config, agg)) in rows.iter().enumerate() {
        let ppd = pass_per_dollar(agg.strict_rate, agg.total_cost_usd)
            .map(|v| format!("{v:7.3}"))
            .unwrap_or_else(|| "      -".to_string());
        out.push_str(&format!(
            "{:>4} {:<8} {:>7} {:>8.3} {:>9.4} {} {:>7.1}\n",
            rank + 1,
            config,
            fmt_pct(agg.strict_rate),
            agg.mean_partial,
            agg.total_cost_usd,
            ppd,
            agg.mean_tool_call_turns,
        ));
    }
    out
}

/// Stair-step frontier over the grid rows.
pub fn pareto_points(ledger: &RunLedger, families: &FamilyRegistry) -> Vec<ParetoPoint> {
    ledger
        .configs()
        .into_iter()
        .filter(|c| parse_config(c, families).is_ok())
        .map(|c| {
            let agg = ledger.aggregate_config(&c, false);
            ParetoPoint {
                config: c,
                pass_rate: agg.strict_rate,
                total_cost_usd: agg.total_cost_usd,
            }
        })
        .collect()
}

pub fn tni_table(corpus: &[ConditionScores]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>7} {:>7} {:>7} {:>8} {:>9} {:<11}\n",
        "task", "solo", "restr", "full", "tni", "eligible", "class"
    ));
    for scores in corpus {
        let t = tni(scores);
        let class = crate::metrics::classify(scores, &t);
        out.push_str(&format!(
            "{:<16} {:>7.3} {:>7.3} {:>7.3} {:>8.3} {:>9} {:<11}\n",
            scores.task_id,
            scores.s_solo,
            scores.s_restricted,
            scores.s_full,
            t.value,
            t.eligible,
            class.as_str(),
        ));
    }
    out.push('\n');
    for (class, count) in class_counts(corpus) {
        out.push_str(&format!("{:<11} {count}\n", class.as_str()));
    }
    out
}

pub fn quintile_table(report: &QuintileReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>3} {:>14} {:>5} {:>9} {:>19}\n",
        "bin", "solo range", "n", "uplift", "95% CI"
    ));
    for (i, bin) in report.bins.iter().enumerate() {
        out.push_str(&format!(
            "{:>3} {:>6.3}-{:>6.3} {:>5} {:>+9.3} [{:>+7.3}, {:>+7.3}]\n",
            i + 1,
            bin.solo_range.0,
            bin.solo_range.1,
            bin.task_count,
            bin.mean_uplift,
            bin.ci95.0,
            bin.ci95.1,
        ));
    }
    out
}

pub fn confusion_table(summary: &ConfusionSummary) -> String {
    let m = &summary.matrix;
    let mut out = String::new();
    out.push_str(&format!(
        "n={} (missing verdicts: {})\n{:>6} {:>6} {:>6} {:>6}\n{:>6} {:>6} {:>6} {:>6}\n",
        m.n(),
        summary.missing,
        "tp",
        "fp",
        "fn",
        "tn",
        m.tp,
        m.fp,
        m.fn_,
        m.tn
    ));
    out.push_str(&format!("accuracy      {}\n", fmt_rate(&summary.accuracy)));
    out.push_str(&format!(
        "false-accept  {}",
        fmt_rate(&summary.false_accept)
    ));
    if let Some(ci) = &summary.false_accept_ci {
        out.push_str(&format!(
            "  Wilson 95% [{:.1}, {:.1}]",
            ci.lo * 100.0,
            ci.hi * 100.0
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "false-reject  {}\n",
        fmt_rate(&summary.false_reject)
    ));
    out
}

pub fn missingness_table(row: &MissingnessRow) -> String {
    format!(
        "missing attestations: {} of {} runs\n\
         exclude             -> verdict-quality bound (attestation-bearing only)\n\
         treat-as-fail       -> {} false-accept among grader-failing\n\
         verifier-failure    -> {} overall\n",
        row.missing,
        row.total_runs,
        fmt_rate(&row.treat_as_fail),
        fmt_rate(&row.verifier_failure_overall),
    )
}

pub fn enforcement_table(rows: &[EnforcementRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<26} {:>22} {:>26} {:>5}\n",
        "condition", "pass rate [95% CI]", "violation rate [95% CI]", "n"
    ));
    for row in rows {
        let pass_ci = row
            .pass_ci
            .map(|ci| format!("[{:.1}, {:.1}]", ci.lo * 100.0, ci.hi * 100.0))
            .unwrap_or_else(|| "-".to_string());
        let violation_ci = row
            .violation_ci
            .map(|ci| format!("[{:.1}, {:.1}]", ci.0 * 100.0, ci.1 * 100.0))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<26} {:>7} {:>14} {:>11} {:>14} {:>5}\n",
            row.mode,
            fmt_pct(row.pass_rate),
            pass_ci,
            fmt_pct(row.violation_rate),
            violation_ci,
            row.n,
        ));
    }
    out
}

/// The open defaults a run depends on, printed on every report.
pub fn declared_defaults(turn_budget: u32, max_remediation_rounds: u32) -> String {
    format!(
        "declared defaults: per-role turn budget {turn_budget}; remediation rounds cap \
         {max_remediation_rounds}; retry policy 3 retries with exponential backoff on \
         rate-limit/unavailable, then infrastructure failure (counted as task failure); \
         per-turn output budget 8192 tokens\n"
    )
}

/// The composite report: text plus a JSON document with the same numbers.
pub fn render_report(
    ledger: &RunLedger,
    families: &FamilyRegistry,
    inputs: &ReportInputs,
    turn_budget: u32,
    max_remediation_rounds: u32,
) -> (String, Value) {
    let mut text = String::new();
    text.push_str("== run ledger ==\n");
    text.push_str(&condition_table(ledger));

    let grid_rows = pareto_points(ledger, families);
    if !grid_rows.is_empty() {
        text.push_str("\n== grid ==\n");
        text.push_str(&grid_table(ledger, families));
        let frontier = pareto(&grid_rows);
        text.push_str("\nPareto frontier (cost ascending): ");
        text.push_str(
            &frontier
                .iter()
                .map(|p| {
                    format!(
                        "{} ({}, ${:.2})",
                        p.config,
                        fmt_pct(p.pass_rate).trim(),
                        p.total_cost_usd
                    )
                })
                .collect::<Vec<_>>()
                .join(" -> "),
        );
        text.push('\n');

        text.push_str("\nrole marginals (mean pass over configs fixing the slot):\n");
        for role in [
            crate::sandbox::Role::Planner,
            crate::sandbox::Role::Executor,
            crate::sandbox::Role::Verifier,
        ] {
            for family in families.letters() {
                if let Ok(marginal) = super::role_marginal(ledger, families, role, family, 31) {
                    text.push_str(&format!(
                        "  {:<9} {family}: {} over {} configs{}\n",
                        role.as_str(),
                        fmt_pct(marginal.mean_pass_rate).trim(),
                        marginal.configs_observed,
                        if marginal.incomplete_grid {
                            "  (incomplete grid)"
                        } else {
                            ""
                        },
                    ));
                }
            }
        }
    }

    if !inputs.condition_scores.is_empty() {
        text.push_str("\n== teamwork necessity ==\n");
        text.push_str(&tni_table(&inputs.condition_scores));
    }
    if let Some(quintiles) = &inputs.quintiles {
        text.push_str("\n== uplift by solo-score quintile ==\n");
        text.push_str(&quintile_table(quintiles));
    }
    if let Some(confusion) = &inputs.confusion {
        text.push_str("\n== verifier vs grader ==\n");
        text.push_str(&confusion_table(confusion));
    }
    if let Some(missingness) = &inputs.missingness {
        text.push_str("\n== missingness sensitivity ==\n");
        text.push_str(&missingness_table(missingness));
    }
    if !inputs.enforcement.is_empty() {
        text.push_str("\n== enforcement comparison ==\n");
        text.push_str(&enforcement_table(&inputs.enforcement));
    }
    text.push('\n');
    text.push_str(&declared_defaults(turn_budget, max_remediation_rounds));

    let total = ledger.aggregate_all(false);
    let json = json!({
        "totals": {
            "runs": total.runs,
            "strict_passes": total.strict_passes,
            "promoted_passes": total.promoted_passes,
            "total_cost_usd": total.total_cost_usd,
            "infra_failures": total.infra_failures,
        },
        "configs": ledger.configs().iter().map(|c| {
            let agg = ledger.aggregate_config(c, false);
            json!({
                "config": c,
                "runs": agg.runs,
                "strict_rate": agg.strict_rate,
                "promoted_rate": agg.promoted_rate,
                "mean_partial": agg.mean_partial,
                "cost_usd": agg.total_cost_usd,
                "mean_tool_call_turns": agg.mean_tool_call_turns,
            })
        }).collect::<Vec<_>>(),
        "class_counts": if inputs.condition_scores.is_empty() {
            Value::Null
        } else {
            json!(class_counts(&inputs.condition_scores)
                .iter()
                .map(|(class, count)| json!({"class": class.as_str(), "count": count}))
                .collect::<Vec<_>>())
        },
        "declared_defaults": {
            "turn_budget": turn_budget,
            "max_remediation_rounds": max_remediation_rounds,
            "retry_policy": "3 retries, exponential backoff, then infrastructure failure",
            "output_budget_tokens": 8192,
        },
    });

    (text, json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{summarize, ConfusionMatrix};
    use crate::runner::ledger::RunRecord;

    fn sample_ledger() -> RunLedger {
        let mut ledger = RunLedger::default();
        for (config, task, strict, promoted, partial, cost) in [
            ("solo", "demo_relay@0", true, true, 1.0, 0.02),
            ("solo", "demo_trap@0", false, false, 0.5, 0.03),
            ("full_team", "demo_relay@0", true, true, 1.0, 0.06),
            ("full_team", "demo_trap@0", false, true, 0.75, 0.05),
        ] {
            ledger.insert(RunRecord {
                config: config.to_string(),
                task_id: task.to_string(),
                seed: 0,
                mode: "enforced".to_string(),
                strict_pass: strict,
                promoted_pass: promoted,
                partial,
                cost_usd: cost,
                tool_call_turns: 7,
                violation_rate: 0.0,
                attestation_present: true,
                verdict_pass: Some(strict),
                infra_failure: false,
                trace_path: None,
            });
        }
        ledger
    }

    #[test]
    fn report_totals_cross_foot_against_ledger() {
        let ledger = sample_ledger();
        let families = FamilyRegistry::default();
        let (text, json) = render_report(&ledger, &families, &ReportInputs::default(), 30, 1);
        assert!(text.contains("TOTAL"));
        assert_eq!(json["totals"]["runs"], 4);
        assert_eq!(json["totals"]["strict_passes"], 2);
        assert_eq!(json["totals"]["promoted_passes"], 3);
        let sum: f64 = ledger.records().map(|r| r.cost_usd).sum();
        assert!((json["totals"]["total_cost_usd"].as_f64().unwrap() - sum).abs() < 1e-12);
        // Strict counts remain recoverable next to promoted counts.
        assert!(text.contains("strict"));
        assert!(text.contains("promoted"));
        // Declared defaults always print.
        assert!(text.contains("turn budget 30"));
        assert!(text.contains("remediation rounds cap 1"));
    }

    #[test]
    fn empty_analyses_render_ledger_summary_only() {
        let ledger = sample_ledger();
        let families = FamilyRegistry::default();
        let (text, _) = render_report(&ledger, &families, &ReportInputs::default(), 30, 1);
        assert!(text.contains("== run ledger =="));
        assert!(!text.contains("== verifier vs grader =="));
        assert!(!text.contains("== teamwork necessity =="));
    }

    #[test]
    fn confusion_section_renders_reference_shape() {
        let summary = summarize(ConfusionMatrix::new(285, 384, 20, 394), 942);
        let table = confusion_table(&summary);
        assert!(table.contains("n=1083"));
        assert!(table.contains("49.4%"));
        assert!(table.contains("[45.9, 52.9]"));
    }
}
