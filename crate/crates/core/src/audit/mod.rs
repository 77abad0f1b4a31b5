//! Grader and verifier audits: verdict-vs-grader confusion with missingness
//! sensitivity, trace violation aggregation, grader mutation testing, and
//! cross-model discrimination.
//!
//! Rates with zero denominators are reported as undefined with their
//! denominator, never as 0, so tiny cells cannot silently inflate verifier
//! quality.

pub mod mutation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::ViolationKind;
use crate::session::Turn;
use crate::stats::{self, Interval};

pub use mutation::{
    mutate_and_grade, MutantRecord, MutationOperator, MutationReport, KILL_RATE_THRESHOLD,
};

/// Per-task pass-rate spreads below this are flagged as non-discriminative.
pub const DISCRIMINATION_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("empty input")]
    EmptyInput,
    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),
    #[error("discrimination needs at least 2 models, got {0}")]
    NeedTwoModels(usize),
    #[error("no passing baseline workspace: {0}")]
    Ineligible(String),
    #[error(transparent)]
    Grade(#[from] crate::grading::GradeError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A proportion that stays honest about empty denominators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: u64,
    pub denominator: u64,
    /// None iff the denominator is zero.
    pub value: Option<f64>,
}

impl Rate {
    pub fn of(numerator: u64, denominator: u64) -> Self {
        Rate {
            numerator,
            denominator,
            value: (denominator > 0).then(|| numerator as f64 / denominator as f64),
        }
    }

    pub fn expect_value(&self) -> f64 {
        self.value.expect("rate denominator is zero")
    }
}

/// Verifier-verdict vs deterministic-grader counts over verdict-bearing runs.
///
/// tp = verdict pass and grader pass; fp = verdict pass, grader fail;
/// fn = verdict fail, grader pass; tn = verdict fail, grader fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Rate {
        Rate::of(self.tp + self.tn, self.n())
    }

    /// Verdict pass on grader-failing runs.
    pub fn false_accept(&self) -> Rate {
        Rate::of(self.fp, self.fp + self.tn)
    }

    /// Verdict fail on grader-passing runs.
    pub fn false_reject(&self) -> Rate {
        Rate::of(self.fn_, self.fn_ + self.tp)
    }
}

/// One run's inputs to the confusion analysis. `verdict` is None when the run
/// produced no attestation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictOutcome {
    pub verdict: Option<bool>,
    pub grader_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub matrix: ConfusionMatrix,
    pub missing: u64,
    pub accuracy: Rate,
    pub false_accept: Rate,
    pub false_reject: Rate,
    /// Wilson 95% CI on the false-accept rate, when defined.
    pub false_accept_ci: Option<Interval>,
}

/// Build the confusion matrix over verdict-bearing runs; runs without a
/// verdict are counted as missing for the sensitivity analyses.
pub fn confusion(runs: &[VerdictOutcome]) -> Result<ConfusionSummary, AuditError> {
    if runs.is_empty() {
        return Err(AuditError::EmptyInput);
    }
    let mut matrix = ConfusionMatrix::default();
    let mut missing = 0;
    for run in runs {
        match (run.verdict, run.grader_pass) {
            (Some(true), true) => matrix.tp += 1,
            (Some(true), false) => matrix.fp += 1,
            (Some(false), true) => matrix.fn_ += 1,
            (Some(false), false) => matrix.tn += 1,
            (None, _) => missing += 1,
        }
    }
    Ok(summarize(matrix, missing))
}

/// Summarize an already-tallied matrix (externally tallied counts go through here).
pub fn summarize(matrix: ConfusionMatrix, missing: u64) -> ConfusionSummary {
    let false_accept = matrix.false_accept();
    let false_accept_ci = (matrix.fp + matrix.tn > 0)
        .then(|| stats::wilson_ci_95(matrix.fp, matrix.fp + matrix.tn).expect("valid counts"));
    ConfusionSummary {
        matrix,
        missing,
        accuracy: matrix.accuracy(),
        false_accept,
        false_reject: matrix.false_reject(),
        false_accept_ci,
    }
}

/// How runs without an attestation enter the rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingnessPolicy {
    /// Attestation-bearing runs only (verdict-quality bound).
    Exclude,
    /// Missing verdicts join the grader-failing/verdict-fail denominator
    /// (conservative bound on false accepts).
    TreatAsFailVerdict,
    /// (fp + fn + missing) / total runs (overall reliability bound).
    CountAsVerifierFailure,
}

/// Recompute the headline rate under a missingness policy.
pub fn sensitivity(
    matrix: &ConfusionMatrix,
    missing: u64,
    total_runs: u64,
    policy: MissingnessPolicy,
) -> Result<Rate, AuditError> {
    if matrix.n() + missing > total_runs {
        return Err(AuditError::InconsistentCounts(format!(
            "matrix n {} + missing {missing} exceeds total runs {total_runs}",
            matrix.n()
        )));
    }
    Ok(match policy {
        MissingnessPolicy::Exclude => matrix.false_accept(),
        MissingnessPolicy::TreatAsFailVerdict => {
            Rate::of(matrix.fp, matrix.fp + matrix.tn + missing)
        }
        MissingnessPolicy::CountAsVerifierFailure => {
            Rate::of(matrix.fp + matrix.fn_ + missing, total_runs)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationAggregate {
    /// Total occurrences per event label across all traces.
    pub per_event: BTreeMap<ViolationKind, u64>,
    /// Per-run mean fraction of turns flagged.
    pub per_run_rates: Vec<f64>,
    pub mean_rate: f64,
    /// Bootstrap 95% CI over per-run rates; None for fewer than 2 runs.
    pub rate_ci95: Option<(f64, f64)>,
}

/// Aggregate gate-decision violations across traces. Behavior labels (the
/// executor-plans heuristic) are not violations and never enter these rates.
pub fn violation_aggregate(traces: &[&[Turn]], rng_seed: u64) -> ViolationAggregate {
    let mut per_event: BTreeMap<ViolationKind, u64> = BTreeMap::new();
    let mut per_run_rates = Vec::with_capacity(traces.len());
    for trace in traces {
        let total = trace.len();
        let flagged = trace.iter().filter(|t| !t.violations.is_empty()).count();
        for turn in *trace {
            for violation in &turn.violations {
                *per_event.entry(*violation).or_insert(0) += 1;
            }
        }
        per_run_rates.push(if total == 0 {
            0.0
        } else {
            flagged as f64 / total as f64
        });
    }
    let mean_rate = if per_run_rates.is_empty() {
        0.0
    } else {
        per_run_rates.iter().sum::<f64>() / per_run_rates.len() as f64
    };
    let rate_ci95 = (per_run_rates.len() >= 2).then(|| {
        stats::paired_bootstrap(&per_run_rates, 2000, rng_seed)
            .expect("two or more runs")
            .ci95
    });
    ViolationAggregate {
        per_event,
        per_run_rates,
        mean_rate,
        rate_ci95,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpread {
    pub task_id: String,
    /// max - min of per-model pass rates.
    pub spread: f64,
    /// Flagged when the spread is under the discrimination threshold.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub per_task: Vec<TaskSpread>,
    /// Tasks meeting the spread threshold.
    pub eligible_count: usize,
    pub flagged_count: usize,
}

/// Per-task pass-rate spread across a model panel: model -> task -> pass rate.
pub fn discrimination(
    outcomes: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<DiscriminationReport, AuditError> {
    if outcomes.len() < 2 {
        return Err(AuditError::NeedTwoModels(outcomes.len()));
    }
    let mut tasks: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for per_task in outcomes.values() {
        for (task, rate) in per_task {
            tasks.entry(task.clone()).or_default().push(*rate);
        }
    }
    let mut per_task = Vec::new();
    for (task_id, rates) in tasks {
        if rates.len() < 2 {
            continue;
        }
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        let spread = max - min;
        per_task.push(TaskSpread {
            task_id,
            spread,
            flagged: spread < DISCRIMINATION_THRESHOLD,
        });
    }
    let flagged_count = per_task.iter().filter(|t| t.flagged).count();
    let eligible_count = per_task.len() - flagged_count;
    Ok(DiscriminationReport {
        per_task,
        eligible_count,
        flagged_count,
    })
}
