//! Run ledger: one record per (config, task, seed) key, newline-delimited on
//! disk, deduplicated by keeping the latest write per key.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad ledger line {line}: {detail}")]
    BadLine { line: usize, detail: String },
}

/// One run's outcome row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Condition name or grid config code.
    pub config: String,
    /// template@seed.
    pub task_id: String,
    pub seed: u64,
    /// Enforcement mode the session ran under.
    #[serde(default = "default_mode")]
    pub mode: String,
    pub strict_pass: bool,
    pub promoted_pass: bool,
    pub partial: f64,
    pub cost_usd: f64,
    pub tool_call_turns: u32,
    /// Fraction of trace turns flagged with a violation.
    #[serde(default)]
    pub violation_rate: f64,
    #[serde(default)]
    pub attestation_present: bool,
    /// The attestation's verdict, when one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_pass: Option<bool>,
    #[serde(default)]
    pub infra_failure: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

fn default_mode() -> String {
    "enforced".to_string()
}

impl RunRecord {
    /// Dedup key: a rerun of the same cell (config, task, seed, mode)
    /// replaces the earlier record.
    pub fn key(&self) -> (String, String, u64, String) {
        (
            self.config.clone(),
            self.task_id.clone(),
            self.seed,
            self.mode.clone(),
        )
    }
}

/// Aggregates computed over a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub strict_passes: usize,
    pub promoted_passes: usize,
    pub strict_rate: f64,
    pub promoted_rate: f64,
    pub mean_partial: f64,
    pub total_cost_usd: f64,
    pub mean_tool_call_turns: f64,
    pub infra_failures: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunLedger {
    records: BTreeMap<(String, String, u64, String), RunRecord>,
}

impl RunLedger {
    pub fn insert(&mut self, record: RunRecord) {
        self.records.insert(record.key(), record);
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn configs(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .records
            .values()
            .map(|r| r.config.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        out.sort();
        out
    }

    pub fn for_config<'a>(&'a self, config: &'a str) -> impl Iterator<Item = &'a RunRecord> {
        self.records.values().filter(move |r| r.config == config)
    }

    pub fn modes(&self) -> Vec<String> {
        self.records
            .values()
            .map(|r| r.mode.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn for_mode<'a>(&'a self, mode: &'a str) -> impl Iterator<Item = &'a RunRecord> {
        self.records.values().filter(move |r| r.mode == mode)
    }

    /// Aggregate over a record subset. Infrastructure failures stay in the
    /// denominator as failures unless `exclude_infra` recomputes without them
    /// (the clearly-labeled sensitivity view).
    pub fn aggregate<'a>(
        records: impl IntoIterator<Item = &'a RunRecord>,
        exclude_infra: bool,
    ) -> Aggregate {
        let mut rows: Vec<&RunRecord> = records.into_iter().collect();
        let infra_failures = rows.iter().filter(|r| r.infra_failure).count();
        if exclude_infra {
            rows.retain(|r| !r.infra_failure);
        }
        let runs = rows.len();
        let strict_passes = rows.iter().filter(|r| r.strict_pass).count();
        let promoted_passes = rows.iter().filter(|r| r.promoted_pass).count();
        let denom = runs.max(1) as f64;
        Aggregate {
            runs,
            strict_passes,
            promoted_passes,
            strict_rate: strict_passes as f64 / denom,
            promoted_rate: promoted_passes as f64 / denom,
            mean_partial: rows.iter().map(|r| r.partial).sum::<f64>() / denom,
            total_cost_usd: rows.iter().map(|r| r.cost_usd).sum(),
            mean_tool_call_turns: rows.iter().map(|r| r.tool_call_turns as f64).sum::<f64>()
                / denom,
            infra_failures,
        }
    }

    pub fn aggregate_all(&self, exclude_infra: bool) -> Aggregate {
        Self::aggregate(self.records.values(), exclude_infra)
    }

    pub fn aggregate_config(&self, config: &str, exclude_infra: bool) -> Aggregate {
        Self::aggregate(self.for_config(config), exclude_infra)
    }

    /// Append records to an NDJSON ledger file.
    pub fn append_to_file(path: &Path, records: &[RunRecord]) -> Result<(), LedgerError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| LedgerError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LedgerError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        for record in records {
            let line = serde_json::to_string(record).expect("records serialize");
            writeln!(file, "{line}").map_err(|source| LedgerError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }

    /// Load an NDJSON ledger file; later lines win their key.
    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let text = fs::read_to_string(path).map_err(|source| LedgerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut ledger = RunLedger::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: RunRecord =
                serde_json::from_str(line).map_err(|e| LedgerError::BadLine {
                    line: idx + 1,
                    detail: e.to_string(),
                })?;
            ledger.insert(record);
        }
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn record(config: &str, task: &str, seed: u64, strict: bool) -> RunRecord {
        RunRecord {
            config: config.to_string(),
            task_id: task.to_string(),
            seed,
            mode: "enforced".to_string(),
            strict_pass: strict,
            promoted_pass: strict,
            partial: if strict { 1.0 } else { 0.4 },
            cost_usd: 0.5,
            tool_call_turns: 10,
            violation_rate: 0.0,
            attestation_present: strict,
            verdict_pass: strict.then_some(true),
            infra_failure: false,
            trace_path: None,
        }
    }

    #[test]
    fn dedup_keeps_latest_write() {
        let mut ledger = RunLedger::default();
        ledger.insert(record("solo", "t@0", 0, false));
        ledger.insert(record("solo", "t@0", 0, true));
        assert_eq!(ledger.len(), 1);
        assert!(ledger.records().next().unwrap().strict_pass);

        // Re-ingesting identical records leaves aggregates unchanged.
        let before = ledger.aggregate_all(false);
        let snapshot: Vec<RunRecord> = ledger.records().cloned().collect();
        for r in snapshot {
            ledger.insert(r);
        }
        assert_eq!(ledger.aggregate_all(false), before);
    }

    #[test]
    fn aggregates_count_infra_as_failures_unless_excluded() {
        let mut ledger = RunLedger::default();
        ledger.insert(record("solo", "t@0", 0, true));
        let mut broken = record("solo", "t@1", 1, false);
        broken.infra_failure = true;
        broken.partial = 0.0;
        ledger.insert(broken);

        let with = ledger.aggregate_all(false);
        assert_eq!(with.runs, 2);
        assert_eq!(with.strict_passes, 1);
        assert!((with.strict_rate - 0.5).abs() < 1e-12);

        let without = ledger.aggregate_all(true);
        assert_eq!(without.runs, 1);
        assert!((without.strict_rate - 1.0).abs() < 1e-12);
        assert_eq!(without.infra_failures, 1);
    }

    #[test]
    fn file_round_trip_dedups_by_last_line() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("ledger").join("records.ndjson");
        RunLedger::append_to_file(&path, &[record("solo", "t@0", 0, false)]).unwrap();
        RunLedger::append_to_file(&path, &[record("solo", "t@0", 0, true)]).unwrap();
        let ledger = RunLedger::load(&path).unwrap();
        assert_eq!(ledger.len(), 1);
        assert!(ledger.records().next().unwrap().strict_pass);
    }
}
