//! Aggregates a run's event log into report metrics: error accounting,
//! suppression totals with the necessary/additional split against a
//! baseline manifest, wall time, and token-metered cost.
//!
//! The report is a pure function of (event log, baseline manifest, prices):
//! rebuilding from a stored log is byte-identical.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{normalize_message, Diagnostic};
use crate::events::{EventRecord, RunEvent, SnapshotStage};
use crate::suppression::SuppressionCategory;
use crate::workspace::SkippedFile;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Cost per million tokens, in dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceSheet {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

/// One entry of a baseline suppression manifest. A run suppression is
/// "necessary" iff its (path, anchor-line content hash, codes) matches a
/// baseline entry; everything else is "additional".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub path: String,
    /// SHA-256 (lowercase hex) of the governed line's exact text, without
    /// its line ending.
    pub anchor_content_hash: String,
    pub codes: Vec<String>,
}

pub fn load_baseline(path: &Path) -> Result<Vec<BaselineEntry>, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReportError::Baseline(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Baseline(e.to_string()))
}

/// A suppression as recorded in the report: the run's suppression manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuppressionRecord {
    pub path: String,
    pub anchor_line: u32,
    pub category: SuppressionCategory,
    pub explanation: String,
    pub codes: Vec<String>,
    pub anchor_content_hash: String,
}

/// Bug-category suppressions surfaced for human review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReviewEntry {
    pub path: String,
    pub anchor_line: u32,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerFileRow {
    pub path: String,
    pub initial_errors: u64,
    pub suppressions: u64,
    pub unresolved: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub repo: String,
    pub dry_run: bool,
    /// Total physical non-blank lines across discovered sources.
    pub loc: u64,
    pub initial_errors: u64,
    /// Initial errors that disappeared without a covering suppression.
    pub resolved_by_fix: u64,
    /// Initial errors eliminated by a suppression directive.
    pub errors_suppressed: u64,
    /// Initial errors still present in the final snapshot.
    pub unresolved: u64,
    /// All errors in the final snapshot, including introduced ones.
    pub final_errors: u64,
    pub suppressions_total: u64,
    pub suppressions_bug: u64,
    pub suppressions_valid: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub necessary_suppressions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additional_suppressions: Option<u64>,
    /// Rendered like `+6.8%`; absent without a baseline manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additional_pct: Option<String>,
    /// `mm:ss`.
    pub wall_time: String,
    pub wall_ms: u64,
    /// Two-decimal dollars, e.g. `22.85`.
    pub cost_usd: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub exit_code: i32,
    pub per_file: Vec<PerFileRow>,
    pub suppressions: Vec<SuppressionRecord>,
    pub bug_review: Vec<BugReviewEntry>,
    pub skipped_files: Vec<SkippedFile>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("event log is incomplete: missing {0}")]
    MissingEvent(&'static str),
    #[error("invalid baseline manifest: {0}")]
    Baseline(String),
}

/// Round-half-up tenths of a percent for `additional / necessary × 100`.
/// `None` when the ratio is undefined (no necessary suppressions but some
/// additional ones).
pub fn additional_pct_tenths(additional: u64, necessary: u64) -> Option<u64> {
    if necessary == 0 {
        return (additional == 0).then_some(0);
    }
    let num = additional as u128 * 1000;
    let den = necessary as u128;
    Some(((num * 2 + den) / (2 * den)) as u64)
}

/// Render like `+8.0%`, or `n/a` when undefined.
pub fn format_additional_pct(additional: u64, necessary: u64) -> String {
    match additional_pct_tenths(additional, necessary) {
        Some(tenths) => format!("+{}.{}%", tenths / 10, tenths % 10),
        None => "n/a".to_string(),
    }
}

/// `mm:ss` with seconds rounded half-up from milliseconds.
pub fn format_mm_ss(ms: u64) -> String {
    let secs = (ms + 500) / 1000;
    format!("{}:{:02}", secs / 60, secs % 60)
}

pub fn parse_mm_ss(text: &str) -> Option<u64> {
    let (m, s) = text.split_once(':')?;
    let minutes: u64 = m.parse().ok()?;
    let seconds: u64 = s.parse().ok()?;
    Some(minutes * 60 + seconds)
}

/// Cost in cents, rounded half-up: (in × price_in + out × price_out) / 10^6.
pub fn cost_cents(tokens_in: u64, tokens_out: u64, price: &PriceSheet) -> u64 {
    let dollars = (tokens_in as f64 * price.input_per_million
        + tokens_out as f64 * price.output_per_million)
        / 1_000_000.0;
    (dollars * 100.0 + 0.5).floor() as u64
}

pub fn format_cents(cents: u64) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

fn identity_key(path: &str, code: &str, message: &str) -> (String, String, String) {
    (path.to_string(), code.to_string(), normalize_message(message))
}

/// Build the report from an event log.
pub fn build_report(
    events: &[EventRecord],
    repo_label: &str,
    baseline: Option<&[BaselineEntry]>,
    price: &PriceSheet,
) -> Result<RunReport, ReportError> {
    let mut dry_run = false;
    let mut saw_run_started = false;
    let mut loc = 0u64;
    let mut skipped_files = Vec::new();
    let mut initial: Option<&[Diagnostic]> = None;
    let mut fin: Option<&[Diagnostic]> = None;
    let mut inserted: Vec<&RunEvent> = Vec::new();
    let mut removed_counts: HashMap<(String, String), u64> = HashMap::new();
    let mut tokens_in = 0u64;
    let mut tokens_out = 0u64;
    let mut wall_ms: Option<u64> = None;
    let mut exit_code = 0i32;

    for record in events {
        match &record.event {
            RunEvent::RunStarted { dry_run: d, .. } => {
                saw_run_started = true;
                dry_run = *d;
            }
            RunEvent::SourcesDiscovered { total_loc, skipped, .. } => {
                loc = *total_loc;
                skipped_files = skipped.clone();
            }
            RunEvent::Snapshot { stage: SnapshotStage::Initial, diagnostics, .. } => {
                initial = Some(diagnostics);
            }
            RunEvent::Snapshot { stage: SnapshotStage::Final, diagnostics, .. } => {
                fin = Some(diagnostics);
            }
            RunEvent::SuppressionInserted { .. } => inserted.push(&record.event),
            RunEvent::DirectiveRemoved { path, text, .. } => {
                *removed_counts.entry((path.clone(), text.clone())).or_default() += 1;
            }
            RunEvent::SessionFinished { tokens_in: ti, tokens_out: to, .. } => {
                tokens_in += ti;
                tokens_out += to;
            }
            RunEvent::RunFinished { wall_ms: w, exit_code: e } => {
                wall_ms = Some(*w);
                exit_code = *e;
            }
            _ => {}
        }
    }

    if !saw_run_started {
        return Err(ReportError::MissingEvent("run_started"));
    }
    let initial = initial.ok_or(ReportError::MissingEvent("initial snapshot"))?;
    let wall_ms = wall_ms.ok_or(ReportError::MissingEvent("run_finished"))?;
    let final_diags: &[Diagnostic] = match fin {
        Some(d) => d,
        None if dry_run => initial,
        None => return Err(ReportError::MissingEvent("final snapshot")),
    };

    // Effective suppressions: inserted minus later removed (matched on
    // path + directive text, as a multiset).
    let mut effective: Vec<SuppressionRecord> = Vec::new();
    let mut covered_counts: HashMap<(String, String, String), u64> = HashMap::new();
    for ev in inserted {
        if let RunEvent::SuppressionInserted {
            path,
            anchor_line,
            category,
            explanation,
            codes,
            anchor_content_hash,
            directive_text,
            covered,
            ..
        } = ev
        {
            let key = (path.clone(), directive_text.clone());
            if let Some(n) = removed_counts.get_mut(&key) {
                if *n > 0 {
                    *n -= 1;
                    continue;
                }
            }
            if !dry_run {
                for c in covered {
                    *covered_counts
                        .entry(identity_key(path, &c.code, &c.message))
                        .or_default() += 1;
                }
            }
            effective.push(SuppressionRecord {
                path: path.clone(),
                anchor_line: *anchor_line,
                category: *category,
                explanation: explanation.clone(),
                codes: codes.clone(),
                anchor_content_hash: anchor_content_hash.clone(),
            });
        }
    }
    effective.sort_by(|a, b| (&a.path, a.anchor_line).cmp(&(&b.path, b.anchor_line)));

    // Per-diagnostic audit over the initial multiset: every initial error is
    // exactly one of resolved-by-fix, suppressed, or unresolved.
    let mut initial_counts: HashMap<(String, String, String), u64> = HashMap::new();
    for d in initial {
        *initial_counts.entry(identity_key(&d.path, &d.code, &d.message)).or_default() += 1;
    }
    let mut final_counts: HashMap<(String, String, String), u64> = HashMap::new();
    for d in final_diags {
        *final_counts.entry(identity_key(&d.path, &d.code, &d.message)).or_default() += 1;
    }
    let mut resolved_by_fix = 0u64;
    let mut errors_suppressed = 0u64;
    let mut unresolved = 0u64;
    let mut unresolved_by_file: BTreeMap<String, u64> = BTreeMap::new();
    if dry_run {
        unresolved = initial.len() as u64;
        for d in initial {
            *unresolved_by_file.entry(d.path.clone()).or_default() += 1;
        }
    } else {
        for (key, &i_k) in &initial_counts {
            let f_k = final_counts.get(key).copied().unwrap_or(0);
            let s_k = covered_counts.get(key).copied().unwrap_or(0);
            let unres = i_k.min(f_k);
            let sup = s_k.min(i_k - unres);
            unresolved += unres;
            errors_suppressed += sup;
            resolved_by_fix += i_k - unres - sup;
            if unres > 0 {
                *unresolved_by_file.entry(key.0.clone()).or_default() += unres;
            }
        }
    }

    // Necessary/additional split against the baseline manifest.
    let (necessary, additional, pct) = match baseline {
        Some(entries) => {
            let mut budget: HashMap<(String, String, Vec<String>), u64> = HashMap::new();
            for e in entries {
                let mut codes = e.codes.clone();
                codes.sort();
                *budget
                    .entry((e.path.clone(), e.anchor_content_hash.clone(), codes))
                    .or_default() += 1;
            }
            let mut necessary = 0u64;
            let mut additional = 0u64;
            for s in &effective {
                let mut codes = s.codes.clone();
                codes.sort();
                let key = (s.path.clone(), s.anchor_content_hash.clone(), codes);
                match budget.get_mut(&key) {
                    Some(n) if *n > 0 => {
                        *n -= 1;
                        necessary += 1;
                    }
                    _ => additional += 1,
                }
            }
            (
                Some(necessary),
                Some(additional),
                Some(format_additional_pct(additional, necessary)),
            )
        }
        None => (None, None, None),
    };

    let mut per_file: BTreeMap<String, PerFileRow> = BTreeMap::new();
    for d in initial {
        per_file
            .entry(d.path.clone())
            .or_insert_with(|| PerFileRow {
                path: d.path.clone(),
                initial_errors: 0,
                suppressions: 0,
                unresolved: 0,
            })
            .initial_errors += 1;
    }
    for s in &effective {
        per_file
            .entry(s.path.clone())
            .or_insert_with(|| PerFileRow {
                path: s.path.clone(),
                initial_errors: 0,
                suppressions: 0,
                unresolved: 0,
            })
            .suppressions += 1;
    }
    for (path, n) in &unresolved_by_file {
        per_file
            .entry(path.clone())
            .or_insert_with(|| PerFileRow {
                path: path.clone(),
                initial_errors: 0,
                suppressions: 0,
                unresolved: 0,
            })
            .unresolved += n;
    }

    let suppressions_bug =
        effective.iter().filter(|s| s.category == SuppressionCategory::Bug).count() as u64;
    let bug_review = effective
        .iter()
        .filter(|s| s.category == SuppressionCategory::Bug)
        .map(|s| BugReviewEntry {
            path: s.path.clone(),
            anchor_line: s.anchor_line,
            explanation: s.explanation.clone(),
        })
        .collect();

    let cents = cost_cents(tokens_in, tokens_out, price);
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        repo: repo_label.to_string(),
        dry_run,
        loc,
        initial_errors: initial.len() as u64,
        resolved_by_fix,
        errors_suppressed,
        unresolved,
        final_errors: if dry_run { initial.len() as u64 } else { final_diags.len() as u64 },
        suppressions_total: effective.len() as u64,
        suppressions_bug,
        suppressions_valid: effective.len() as u64 - suppressions_bug,
        necessary_suppressions: necessary,
        additional_suppressions: additional,
        additional_pct: pct,
        wall_time: format_mm_ss(wall_ms),
        wall_ms,
        cost_usd: format_cents(cents),
        tokens_in,
        tokens_out,
        exit_code,
        per_file: per_file.into_values().collect(),
        suppressions: effective,
        bug_review,
        skipped_files,
    })
}

/// Fixed-width text table over one or more repo reports, with a totals row
/// (counts and times summed with carry, costs summed, the additional
/// percentage recomputed from the summed counts).
pub fn render_table(reports: &[RunReport]) -> String {
    let headers = [
        "Repo",
        "LOC",
        "Type Errors",
        "Necessary Suppressions",
        "Additional Suppressions",
        "Time",
        "Cost",
        "Unresolved",
    ];

    let row_cells = |r: &RunReport| -> Vec<String> {
        let (necessary_cell, additional_cell) = match (r.necessary_suppressions, r.additional_suppressions)
        {
            (Some(n), Some(a)) => (
                n.to_string(),
                format!("+{a} ({})", r.additional_pct.clone().unwrap_or_else(|| "n/a".into())),
            ),
            // Without a baseline there is no split; the raw count is shown
            // under Necessary and Additional stays empty.
            _ => (r.suppressions_total.to_string(), "-".to_string()),
        };
        vec![
            r.repo.clone(),
            r.loc.to_string(),
            r.initial_errors.to_string(),
            necessary_cell,
            additional_cell,
            r.wall_time.clone(),
            format!("${}", r.cost_usd),
            r.unresolved.to_string(),
        ]
    };

    let mut rows: Vec<Vec<String>> = reports.iter().map(row_cells).collect();

    // Totals.
    let split = reports
        .iter()
        .map(|r| (r.necessary_suppressions, r.additional_suppressions))
        .collect::<Vec<_>>();
    let all_split = !reports.is_empty() && split.iter().all(|(n, a)| n.is_some() && a.is_some());
    let total_necessary: u64 = if all_split {
        split.iter().map(|(n, _)| n.unwrap()).sum()
    } else {
        reports.iter().map(|r| r.suppressions_total).sum()
    };
    let (necessary_cell, additional_cell) = if all_split {
        let total_additional: u64 = split.iter().map(|(_, a)| a.unwrap()).sum();
        (
            total_necessary.to_string(),
            format!(
                "+{total_additional} ({})",
                format_additional_pct(total_additional, total_necessary)
            ),
        )
    } else {
        (total_necessary.to_string(), "-".to_string())
    };
    let total_secs: u64 = reports.iter().filter_map(|r| parse_mm_ss(&r.wall_time)).sum();
    let total_cents: u64 = reports
        .iter()
        .filter_map(|r| {
            let (d, c) = r.cost_usd.split_once('.')?;
            Some(d.parse::<u64>().ok()? * 100 + c.parse::<u64>().ok()?)
        })
        .sum();
    rows.push(vec![
        "Total".to_string(),
        reports.iter().map(|r| r.loc).sum::<u64>().to_string(),
        reports.iter().map(|r| r.initial_errors).sum::<u64>().to_string(),
        necessary_cell,
        additional_cell,
        format_mm_ss(total_secs * 1000),
        format!("${}", format_cents(total_cents)),
        reports.iter().map(|r| r.unresolved).sum::<u64>().to_string(),
    ]);

    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<width$}", width = widths[i])
                } else {
                    format!("{c:>width$}", width = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    out.push_str(&render_row(&headers.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if i + 1 == n {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}

/// Stable-field-order JSON document, schema-versioned, trailing newline.
pub fn emit_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}
