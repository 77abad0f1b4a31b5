//! Coordination metrics over per-task condition scores and traces: the
//! teamwork-necessity index, role values, task classification, quintile
//! stratification, and relay fidelity.
//!
//! The necessity index is the fraction of the Solo-versus-Restricted gap the
//! team recovers, with the denominator clamped at epsilon = 0.05; summaries
//! average only tasks whose gap exceeds epsilon.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::Role;
use crate::session::Turn;
use crate::stats;
use crate::taskgen::normalize_tokens;

pub const TNI_EPSILON: f64 = 0.05;
/// Classification band half-width around zero uplift.
pub const CLASS_BAND: f64 = 0.05;
/// Absolute slack on the band comparison so an uplift that is the boundary
/// value up to floating-point representation classifies NEUTRAL.
const CLASS_BAND_SLACK: f64 = 1e-9;

/// Per-task scores across the five conditions, either partial scores or pass
/// rates, all in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScores {
    pub task_id: String,
    pub s_solo: f64,
    pub s_restricted: f64,
    pub s_full: f64,
    pub s_no_plan: f64,
    pub s_no_verify: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TniResult {
    /// May exceed 1 when the team beats the full-access single agent.
    pub value: f64,
    /// Gap > epsilon; ineligible tasks are excluded from summaries.
    pub eligible: bool,
    pub epsilon: f64,
}

/// Teamwork Necessity Index: (S_full - S_restricted) / max(eps, S_solo - S_restricted).
pub fn tni(scores: &ConditionScores) -> TniResult {
    let gap = scores.s_solo - scores.s_restricted;
    let value = (scores.s_full - scores.s_restricted) / gap.max(TNI_EPSILON);
    TniResult {
        value,
        eligible: gap > TNI_EPSILON,
        epsilon: TNI_EPSILON,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleValues {
    /// S_full - S_no_plan.
    pub planning_value: f64,
    /// S_full - S_no_verify.
    pub verification_value: f64,
}

pub fn role_values(scores: &ConditionScores) -> RoleValues {
    RoleValues {
        planning_value: scores.s_full - scores.s_no_plan,
        verification_value: scores.s_full - scores.s_no_verify,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum TaskClass {
    HighTni,
    TeamHelps,
    Neutral,
    TeamHurts,
}

impl TaskClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskClass::HighTni => "HIGH-TNI",
            TaskClass::TeamHelps => "TEAM-HELPS",
            TaskClass::Neutral => "NEUTRAL",
            TaskClass::TeamHurts => "TEAM-HURTS",
        }
    }
}

/// Deterministic, total classification. Uplift u = S_full - S_solo with a
/// +-0.05 band; boundary values land in NEUTRAL. HIGH-TNI requires
/// eligibility, TNI >= 1, and u beyond the band.
pub fn classify(scores: &ConditionScores, tni_result: &TniResult) -> TaskClass {
    let uplift = scores.s_full - scores.s_solo;
    let above = uplift > CLASS_BAND + CLASS_BAND_SLACK;
    let below = uplift < -CLASS_BAND - CLASS_BAND_SLACK;
    if tni_result.eligible && tni_result.value >= 1.0 && above {
        TaskClass::HighTni
    } else if above {
        TaskClass::TeamHelps
    } else if below {
        TaskClass::TeamHurts
    } else {
        TaskClass::Neutral
    }
}

/// Class counts over a corpus, in HIGH-TNI / TEAM-HELPS / NEUTRAL / TEAM-HURTS
/// order.
pub fn class_counts(corpus: &[ConditionScores]) -> [(TaskClass, usize); 4] {
    let mut counts = [
        (TaskClass::HighTni, 0),
        (TaskClass::TeamHelps, 0),
        (TaskClass::Neutral, 0),
        (TaskClass::TeamHurts, 0),
    ];
    for scores in corpus {
        let class = classify(scores, &tni(scores));
        for slot in counts.iter_mut() {
            if slot.0 == class {
                slot.1 += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("quintile stratification needs at least 5 tasks, got {0}")]
    CorpusTooSmall(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileBin {
    /// Solo-score range covered by this bin (inclusive endpoints).
    pub solo_range: (f64, f64),
    pub task_count: usize,
    pub mean_uplift: f64,
    /// Bootstrap 95% interval over the bin's uplifts; collapses to a point
    /// for single-task bins.
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileReport {
    pub bins: Vec<QuintileBin>,
}

/// Stratify a corpus into five bins of equal task count (sizes differ by at
/// most one, larger bins first) by ascending Solo score, tie-broken by task
/// id, and report mean Full-minus-Solo uplift per bin with a bootstrap CI.
pub fn quintile_uplift(
    corpus: &[ConditionScores],
    bootstrap_iterations: u32,
    rng_seed: u64,
) -> Result<QuintileReport, MetricsError> {
    if corpus.len() < 5 {
        return Err(MetricsError::CorpusTooSmall(corpus.len()));
    }
    let mut ordered: Vec<&ConditionScores> = corpus.iter().collect();
    ordered.sort_by(|a, b| {
        a.s_solo
            .partial_cmp(&b.s_solo)
            .expect("scores are finite")
            .then_with(|| a.task_id.cmp(&b.task_id))
    });

    let n = ordered.len();
    let base = n / 5;
    let remainder = n % 5;
    let mut bins = Vec::with_capacity(5);
    let mut cursor = 0;
    for bin_index in 0..5 {
        let size = base + usize::from(bin_index < remainder);
        let slice = &ordered[cursor..cursor + size];
        cursor += size;
        let uplifts: Vec<f64> = slice.iter().map(|s| s.s_full - s.s_solo).collect();
        let mean = uplifts.iter().sum::<f64>() / uplifts.len() as f64;
        let ci95 = if uplifts.len() >= 2 {
            stats::paired_bootstrap(&uplifts, bootstrap_iterations, rng_seed)
                .expect("bin has >= 2 tasks")
                .ci95
        } else {
            (mean, mean)
        };
        bins.push(QuintileBin {
            solo_range: (
                slice.first().map(|s| s.s_solo).unwrap_or(0.0),
                slice.last().map(|s| s.s_solo).unwrap_or(0.0),
            ),
            task_count: size,
            mean_uplift: mean,
            ci95,
        });
    }
    Ok(QuintileReport { bins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayFidelity {
    /// Fraction of critical tokens present in the Planner's sent messages.
    pub planner_recall: f64,
    /// Fraction of critical tokens present in Executor tool inputs+outputs.
    pub executor_recall: f64,
    /// Of the critical tokens the Planner relayed, the fraction the Executor
    /// channel retained. A lower bound on information transfer.
    pub retention: f64,
    /// Set when the planner channel had no content.
    pub empty_planner_channel: bool,
}

/// Token-level relay fidelity over one trace, using the task generator's
/// token normalization.
pub fn relay_fidelity(trace: &[Turn], critical_tokens: &BTreeSet<String>) -> RelayFidelity {
    let mut planner_text = String::new();
    let mut executor_text = String::new();
    for turn in trace {
        match turn.role {
            Role::Planner => {
                for outcome in &turn.tool_calls {
                    if outcome.call.name == "send_message" && outcome.exit_status == 0 {
                        if let Some(body) = outcome
                            .call
                            .arguments
                            .get("content")
                            .and_then(|v| v.as_str())
                        {
                            planner_text.push_str(body);
                            planner_text.push('\n');
                        }
                    }
                }
            }
            Role::Executor => {
                for outcome in &turn.tool_calls {
                    executor_text.push_str(&outcome.call.arguments.to_string());
                    executor_text.push('\n');
                    executor_text.push_str(&outcome.output);
                    executor_text.push('\n');
                }
            }
            _ => {}
        }
    }

    let empty_planner_channel = planner_text.trim().is_empty();
    let planner_tokens = normalize_tokens(&planner_text);
    let executor_tokens = normalize_tokens(&executor_text);

    let total = critical_tokens.len();
    if total == 0 {
        return RelayFidelity {
            planner_recall: 0.0,
            executor_recall: 0.0,
            retention: 0.0,
            empty_planner_channel,
        };
    }

    let in_planner: BTreeSet<&String> = critical_tokens
        .iter()
        .filter(|t| planner_tokens.contains(*t))
        .collect();
    let in_executor: BTreeSet<&String> = critical_tokens
        .iter()
        .filter(|t| executor_tokens.contains(*t))
        .collect();
    let relayed_and_retained = in_planner.intersection(&in_executor).count();

    RelayFidelity {
        planner_recall: in_planner.len() as f64 / total as f64,
        executor_recall: in_executor.len() as f64 / total as f64,
        retention: relayed_and_retained as f64 / (in_planner.len().max(1)) as f64,
        empty_planner_channel,
    }
}
