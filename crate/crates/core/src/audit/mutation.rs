//! Grader mutation testing: apply small structural mutations to a
//! known-passing workspace and measure how many the grader kills.
//!
//! Three operators over the demo tasks' Python sources: operator swaps,
//! return-value flips, and function body deletions. Sites are enumerated
//! deterministically in file order; when more sites exist than the requested
//! mutant count, a seeded shuffle picks the subset, so reports are
//! reproducible from (workspace, seed, count).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::grading::run_grader;
use crate::taskgen::TaskInstance;

pub const KILL_RATE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MUTANT_COUNT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationOperator {
    OperatorSwap,
    ReturnFlip,
    BodyDeletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantRecord {
    pub operator: MutationOperator,
    /// `file:line` of the mutated site.
    pub location: String,
    pub killed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub mutants: Vec<MutantRecord>,
    pub kill_rate: f64,
    /// Pass iff kill_rate >= 0.5 (or the task is exempt).
    pub verdict_pass: bool,
    /// Set when the workspace has no mutable source sites (artifact-scored
    /// tasks); exempt tasks are not gated.
    pub exempt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MutationReport {
    /// Build a report from raw mutant records (fixtures and ingested data).
    pub fn from_mutants(mutants: Vec<MutantRecord>, note: Option<String>) -> Self {
        let total = mutants.len();
        let killed = mutants.iter().filter(|m| m.killed).count();
        let kill_rate = if total == 0 {
            0.0
        } else {
            killed as f64 / total as f64
        };
        MutationReport {
            mutants,
            kill_rate,
            verdict_pass: kill_rate >= KILL_RATE_THRESHOLD,
            exempt: false,
            note,
        }
    }
}

/// One concrete mutation: a file rewritten with a single site changed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub operator: MutationOperator,
    pub file: String,
    /// 1-based line of the mutated site.
    pub line: usize,
    pub mutated_content: String,
}

impl Mutant {
    pub fn location(&self) -> String {
        format!("{}:{}", self.file, self.line)
    }
}

const SWAPS: [(&str, &str); 10] = [
    (" * ", " + "),
    (" + ", " - "),
    (" - ", " + "),
    (" / ", " * "),
    (" >= ", " < "),
    (" <= ", " > "),
    (" == ", " != "),
    (" != ", " == "),
    (" > ", " <= "),
    (" < ", " >= "),
];

/// Enumerate every mutation site in the workspace's Python sources, in
/// sorted-file order, then line order, then operator order (swaps, flips,
/// deletions per file).
pub fn enumerate_sites(workspace: &Path) -> Result<Vec<Mutant>, AuditError> {
    let mut files: Vec<PathBuf> = Vec::new();
    collect_py(workspace, &mut files).map_err(|source| AuditError::Io {
        path: workspace.to_path_buf(),
        source,
    })?;
    files.sort();

    let mut mutants = Vec::new();
    for file in &files {
        let rel = file
            .strip_prefix(workspace)
            .unwrap_or(file)
            .to_string_lossy()
            .replace('\\', "/");
        let content = fs::read_to_string(file).map_err(|source| AuditError::Io {
            path: file.clone(),
            source,
        })?;
        let lines: Vec<&str> = content.lines().collect();

        // Operator swaps, first match per swap pair per line.
        for (idx, line) in lines.iter().enumerate() {
            let code = code_portion(line);
            for (from, to) in SWAPS {
                if let Some(pos) = code.find(from) {
                    // Only the first occurrence on the line is a site; nested
                    // occurrences would double-count heavily on dense lines.
                    let mutated_line =
                        format!("{}{}{}", &code[..pos], to, &code[pos + from.len()..]);
                    let full_line = format!("{mutated_line}{}", comment_portion(line));
                    mutants.push(Mutant {
                        operator: MutationOperator::OperatorSwap,
                        file: rel.clone(),
                        line: idx + 1,
                        mutated_content: replace_line(&lines, idx, &full_line),
                    });
                }
            }
        }

        // Boolean return flips.
        for (idx, line) in lines.iter().enumerate() {
            let trimmed = line.trim_start();
            let flipped = if trimmed == "return True" {
                Some(line.replace("return True", "return False"))
            } else if trimmed == "return False" {
                Some(line.replace("return False", "return True"))
            } else {
                None
            };
            if let Some(new_line) = flipped {
                mutants.push(Mutant {
                    operator: MutationOperator::ReturnFlip,
                    file: rel.clone(),
                    line: idx + 1,
                    mutated_content: replace_line(&lines, idx, &new_line),
                });
            }
        }

        // Function body deletions.
        for (idx, line) in lines.iter().enumerate() {
            let trimmed = line.trim_start();
            if !trimmed.starts_with("def ") || !trimmed.ends_with(':') {
                continue;
            }
            let def_indent = indent_of(line);
            let mut body_end = idx + 1;
            while body_end < lines.len() {
                let candidate = lines[body_end];
                if candidate.trim().is_empty() || indent_of(candidate) > def_indent {
                    body_end += 1;
                } else {
                    break;
                }
            }
            // Trim trailing blank lines out of the body.
            let mut last_code = idx;
            for (probe, probe_line) in lines.iter().enumerate().take(body_end).skip(idx + 1) {
                if !probe_line.trim().is_empty() {
                    last_code = probe;
                }
            }
            if last_code == idx {
                continue;
            }
            let mut new_lines: Vec<String> = Vec::new();
            new_lines.extend(lines[..=idx].iter().map(|l| l.to_string()));
            new_lines.push(format!("{}pass", " ".repeat(def_indent + 4)));
            new_lines.extend(lines[last_code + 1..].iter().map(|l| l.to_string()));
            mutants.push(Mutant {
                operator: MutationOperator::BodyDeletion,
                file: rel.clone(),
                line: idx + 1,
                mutated_content: join_lines(&new_lines),
            });
        }
    }
    Ok(mutants)
}

/// Seeded subset selection when more sites exist than requested, then stable
/// (file, line) order for the report.
pub fn select_mutants(mut sites: Vec<Mutant>, seed: u64, count: usize) -> (Vec<Mutant>, bool) {
    let exhausted = sites.len() <= count;
    if !exhausted {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sites.shuffle(&mut rng);
        sites.truncate(count);
        sites.sort_by(|a, b| {
            (&a.file, a.line, a.operator)
                .partial_cmp(&(&b.file, b.line, b.operator))
                .expect("total order")
        });
    }
    (sites, exhausted)
}

/// Mutation-test a grader against a known-passing workspace.
///
/// The baseline must binary-pass (runs without one are ineligible). Each
/// selected mutant is graded in isolation; killed means the binary verdict
/// flipped to fail. Zero enumerable sites marks the task exempt.
pub fn mutate_and_grade(
    instance: &TaskInstance,
    passing_workspace: &Path,
    attestation: Option<&Path>,
    mutation_seed: u64,
    count: usize,
) -> Result<MutationReport, AuditError> {
    let baseline = run_grader(instance, passing_workspace, attestation)?;
    if !baseline.binary_pass {
        return Err(AuditError::Ineligible(format!(
            "baseline grades {}/{} checks",
            baseline.checks.iter().filter(|c| c.pass).count(),
            baseline.checks.len()
        )));
    }

    let sites = enumerate_sites(passing_workspace)?;
    if sites.is_empty() {
        return Ok(MutationReport {
            mutants: Vec::new(),
            kill_rate: 0.0,
            verdict_pass: true,
            exempt: true,
            note: Some("no mutable source sites; grader scores an artifact, not source".into()),
        });
    }

    let total_sites = sites.len();
    let (selected, exhausted) = select_mutants(sites, mutation_seed, count);
    let mut mutants = Vec::with_capacity(selected.len());
    for mutant in &selected {
        let staging = tempfile::Builder::new()
            .prefix("mutant-")
            .tempdir()
            .map_err(|source| AuditError::Io {
                path: PathBuf::from("tempdir"),
                source,
            })?;
        let mutated_ws = staging.path().join("workspace");
        crate::grading::copy_dir(passing_workspace, &mutated_ws)?;
        fs::write(mutated_ws.join(&mutant.file), &mutant.mutated_content).map_err(|source| {
            AuditError::Io {
                path: mutated_ws.join(&mutant.file),
                source,
            }
        })?;
        let graded = run_grader(instance, &mutated_ws, attestation)?;
        mutants.push(MutantRecord {
            operator: mutant.operator,
            location: mutant.location(),
            killed: !graded.binary_pass,
        });
    }

    let note = if exhausted && total_sites < count {
        Some(format!(
            "site exhaustion: {total_sites} sites available, {count} requested"
        ))
    } else {
        None
    };
    Ok(MutationReport::from_mutants(mutants, note))
}

fn collect_py(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_py(&path, out)?;
        } else if path.extension().and_then(|e| e.to_str()) == Some("py") {
            out.push(path);
        }
    }
    Ok(())
}

/// The code part of a line: nothing after a comment marker, nothing inside a
/// string literal (single-line quote tracking).
fn code_portion(line: &str) -> String {
    let mut out = String::new();
    let mut in_single = false;
    let mut in_double = false;
    for c in line.chars() {
        match c {
            '#' if !in_single && !in_double => break,
            '\'' if !in_double => in_single = !in_single,
            '"' if !in_single => in_double = !in_double,
            _ => {}
        }
        if in_single || in_double {
            // Mask string contents so operator scans skip them.
            out.push(if c == '\'' || c == '"' { c } else { '_' });
        } else {
            out.push(c);
        }
    }
    out
}

fn comment_portion(line: &str) -> String {
    let code = code_portion(line);
    line[code.len()..].to_string()
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn replace_line(lines: &[&str], idx: usize, new_line: &str) -> String {
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    out[idx] = new_line.to_string();
    join_lines(&out)
}

fn join_lines(lines: &[String]) -> String {
    let mut text = lines.join("\n");
    text.push('\n');
    text
}
