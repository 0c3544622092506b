//! Suppression directives: generation, placement, classification, cleanup,
//! and scanning.
//!
//! The directive grammar is bit-exact:
//!
//! ```text
//! ^[ \t]*// @ts-expect-error -- \[agentic-typer:(bug|valid)\] .+$
//! ```
//!
//! One directive governs all errors on its anchor line (the line below the
//! comment). Directives are checked by the type checker itself: an unused
//! one produces its own diagnostic, which drives automatic cleanup. Lines
//! carrying the directive keyword without the tool tag are foreign: counted
//! separately, never edited.

use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::ErrorSnapshot;
use crate::workspace::{self, CheckerConfig};

/// Diagnostic code the checker emits for an unused suppression directive.
pub const UNUSED_DIRECTIVE_CODE: &str = "TS2578";

/// Bug suppressions mark likely defects for human review; valid patterns
/// are dynamic idioms that cannot be typed without behavioral change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionCategory {
    Bug,
    ValidPattern,
}

impl SuppressionCategory {
    /// Short tag used inside the directive.
    pub fn tag(self) -> &'static str {
        match self {
            SuppressionCategory::Bug => "bug",
            SuppressionCategory::ValidPattern => "valid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "bug" => Some(SuppressionCategory::Bug),
            "valid" => Some(SuppressionCategory::ValidPattern),
            _ => None,
        }
    }
}

/// One inserted directive: where it lives, why, and what it silenced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suppression {
    pub path: String,
    /// 1-based line the directive governs (the line below the comment).
    pub anchor_line: u32,
    pub category: SuppressionCategory,
    /// Single line, non-empty.
    pub explanation: String,
    /// Diagnostic codes observed on the anchor line at insertion time.
    pub suppressed_codes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SuppressionError {
    #[error("line {line} out of range (file has {count} lines)")]
    LineOutOfRange { line: u32, count: usize },
    #[error("line {line} is itself a suppression directive")]
    AnchorIsDirective { line: u32 },
    #[error("line {line} is already governed by a directive; one directive covers all errors on its anchor line")]
    AlreadyGoverned { line: u32 },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Workspace(#[from] workspace::WorkspaceError),
}

fn tagged_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[ \t]*// @ts-expect-error -- \[agentic-typer:(bug|valid)\] (.+)$")
            .expect("directive grammar regex")
    })
}

/// Render the directive line (without trailing newline).
pub fn render_directive(s: &Suppression, indent: &str) -> String {
    debug_assert!(indent.chars().all(|c| c == ' ' || c == '\t'));
    format!(
        "{indent}// @ts-expect-error -- [agentic-typer:{}] {}",
        s.category.tag(),
        s.explanation
    )
}

/// Classification of a single source line with respect to the grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveLine {
    /// Matches the tool grammar.
    Tagged { category: SuppressionCategory, explanation: String },
    /// Carries the directive keyword but not the tool tag.
    Foreign,
}

/// Parse one line; `None` when the line is not a directive at all.
pub fn parse_directive(line: &str) -> Option<DirectiveLine> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if let Some(caps) = tagged_re().captures(line) {
        return Some(DirectiveLine::Tagged {
            category: SuppressionCategory::from_tag(&caps[1]).expect("grammar-limited tag"),
            explanation: caps[2].to_string(),
        });
    }
    if line.contains("@ts-expect-error") {
        let trimmed = line.trim_start();
        if trimmed.starts_with("//") || trimmed.starts_with("/*") || trimmed.starts_with('*') {
            return Some(DirectiveLine::Foreign);
        }
    }
    None
}

fn line_ending_of(line: &str) -> &'static str {
    if line.ends_with("\r\n") {
        "\r\n"
    } else {
        "\n"
    }
}

fn strip_line_ending(line: &str) -> &str {
    line.strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(line)
}

/// Insert a directive with the target line's leading whitespace immediately
/// above the target line. The edit is comment-only: the fingerprint of the
/// result equals the fingerprint of the input.
pub fn insert_suppression(
    content: &str,
    line: u32,
    s: &Suppression,
) -> Result<String, SuppressionError> {
    let lines: Vec<&str> = content.split_inclusive('\n').collect();
    if line == 0 || line as usize > lines.len() {
        return Err(SuppressionError::LineOutOfRange { line, count: lines.len() });
    }
    let idx = (line - 1) as usize;
    let target = lines[idx];
    let body = strip_line_ending(target);
    if parse_directive(body).is_some() {
        return Err(SuppressionError::AnchorIsDirective { line });
    }
    if idx > 0 && parse_directive(strip_line_ending(lines[idx - 1])).is_some() {
        return Err(SuppressionError::AlreadyGoverned { line });
    }

    let indent: String =
        body.chars().take_while(|c| *c == ' ' || *c == '\t').collect();
    let mut out = String::with_capacity(content.len() + body.len() + 64);
    for l in &lines[..idx] {
        out.push_str(l);
    }
    out.push_str(&render_directive(s, &indent));
    out.push_str(line_ending_of(target));
    for l in &lines[idx..] {
        out.push_str(l);
    }
    debug_assert_eq!(
        crate::fingerprint::fingerprint(&out).ok().as_ref(),
        crate::fingerprint::fingerprint(content).ok().as_ref(),
        "directive insertion must not change the fingerprint"
    );
    Ok(out)
}

/// A directive line removed during cleanup, for the run report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedDirective {
    pub path: String,
    /// 1-based line the directive occupied at removal time.
    pub line: u32,
    /// The removed line, without line ending.
    pub text: String,
}

/// Remove every tool-tagged directive the checker flagged as unused in
/// `snapshot`. Foreign directives are never edited. Removal is comment-only
/// and never changes a file's fingerprint.
pub fn cleanup_unused(
    root: &Path,
    snapshot: &ErrorSnapshot,
) -> Result<Vec<RemovedDirective>, SuppressionError> {
    let mut removed = Vec::new();
    for (path, diags) in snapshot.by_file() {
        let mut unused_lines: Vec<u32> = diags
            .iter()
            .filter(|d| d.code == UNUSED_DIRECTIVE_CODE)
            .map(|d| d.line)
            .collect();
        if unused_lines.is_empty() {
            continue;
        }
        unused_lines.sort_unstable();
        unused_lines.dedup();
        let abs = root.join(path);
        let content = fs::read_to_string(&abs)
            .map_err(|e| SuppressionError::Io { path: path.clone(), source: e })?;
        let mut lines: Vec<&str> = content.split_inclusive('\n').collect();
        let mut changed = false;
        for &line in unused_lines.iter().rev() {
            let idx = (line - 1) as usize;
            if idx >= lines.len() {
                continue;
            }
            let body = strip_line_ending(lines[idx]);
            if matches!(parse_directive(body), Some(DirectiveLine::Tagged { .. })) {
                removed.push(RemovedDirective {
                    path: path.clone(),
                    line,
                    text: body.to_string(),
                });
                lines.remove(idx);
                changed = true;
            }
        }
        if changed {
            let new_content: String = lines.concat();
            debug_assert_eq!(
                crate::fingerprint::fingerprint(&new_content).ok().as_ref(),
                crate::fingerprint::fingerprint(&content).ok().as_ref(),
                "directive removal must not change the fingerprint"
            );
            fs::write(&abs, new_content)
                .map_err(|e| SuppressionError::Io { path: path.clone(), source: e })?;
        }
    }
    removed.sort_by(|a, b| (&a.path, a.line).cmp(&(&b.path, b.line)));
    Ok(removed)
}

/// A tool-tagged directive found on disk. Scanning recovers placement and
/// classification; the codes silenced at insertion time live in the run
/// event log, not in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScannedDirective {
    pub path: String,
    /// 1-based line of the directive comment itself.
    pub directive_line: u32,
    /// 1-based line the directive governs.
    pub anchor_line: u32,
    pub category: SuppressionCategory,
    pub explanation: String,
}

/// A directive with the keyword but without the tool tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignDirective {
    pub path: String,
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Default)]
pub struct ScanResult {
    pub directives: Vec<ScannedDirective>,
    pub foreign: Vec<ForeignDirective>,
}

/// Parse every directive line across the discovered sources.
pub fn scan_suppressions(
    root: &Path,
    config: &CheckerConfig,
) -> Result<ScanResult, SuppressionError> {
    let sources = workspace::discover_sources(root, config)?;
    let mut out = ScanResult::default();
    for record in &sources.records {
        let text = String::from_utf8_lossy(&record.baseline_content);
        for (idx, line) in text.lines().enumerate() {
            match parse_directive(line) {
                Some(DirectiveLine::Tagged { category, explanation }) => {
                    out.directives.push(ScannedDirective {
                        path: record.path.clone(),
                        directive_line: idx as u32 + 1,
                        anchor_line: idx as u32 + 2,
                        category,
                        explanation,
                    });
                }
                Some(DirectiveLine::Foreign) => out.foreign.push(ForeignDirective {
                    path: record.path.clone(),
                    line: idx as u32 + 1,
                    text: line.to_string(),
                }),
                None => {}
            }
        }
    }
    Ok(out)
}

/// A tool-tagged directive that appears in `new` but not in `old`, with its
/// anchor aligned back to `old` line numbers where possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddedDirective {
    /// 1-based directive line in the new content.
    pub directive_line_new: u32,
    /// 1-based governed line in the new content.
    pub anchor_line_new: u32,
    /// The governed line's position in the old content, when the line
    /// aligned; this is where the silenced diagnostics were reported.
    pub anchor_line_old: Option<u32>,
    pub category: SuppressionCategory,
    pub explanation: String,
    /// Governed line text (no line ending).
    pub anchor_text: String,
    /// The directive line text (no line ending).
    pub directive_text: String,
}

#[derive(Debug, Default)]
pub struct DirectiveChanges {
    pub added: Vec<AddedDirective>,
    /// Tool-tagged directive lines present in `old` but absent from `new`.
    pub removed: Vec<RemovedDirective>,
}

/// Compare two versions of one file and report tagged-directive changes.
/// Alignment is a longest-common-subsequence over whole lines, which is
/// exact here because hook-accepted edits only touch comment lines.
pub fn directive_changes(path: &str, old: &str, new: &str) -> DirectiveChanges {
    let old_lines: Vec<&str> = old.lines().collect();
    let new_lines: Vec<&str> = new.lines().collect();
    let matches = lcs_line_matches(&old_lines, &new_lines);
    let mut new_to_old = vec![None; new_lines.len()];
    let mut old_matched = vec![false; old_lines.len()];
    for &(o, n) in &matches {
        new_to_old[n] = Some(o);
        old_matched[o] = true;
    }

    let mut changes = DirectiveChanges::default();
    for (n, line) in new_lines.iter().enumerate() {
        if new_to_old[n].is_some() {
            continue;
        }
        if let Some(DirectiveLine::Tagged { category, explanation }) = parse_directive(line) {
            let anchor_idx = n + 1;
            let anchor_text = new_lines.get(anchor_idx).copied().unwrap_or("");
            changes.added.push(AddedDirective {
                directive_line_new: n as u32 + 1,
                anchor_line_new: anchor_idx as u32 + 1,
                anchor_line_old: new_to_old
                    .get(anchor_idx)
                    .copied()
                    .flatten()
                    .map(|o| o as u32 + 1),
                category,
                explanation,
                anchor_text: anchor_text.to_string(),
                directive_text: line.to_string(),
            });
        }
    }
    for (o, line) in old_lines.iter().enumerate() {
        if old_matched[o] {
            continue;
        }
        if matches!(parse_directive(line), Some(DirectiveLine::Tagged { .. })) {
            changes.removed.push(RemovedDirective {
                path: path.to_string(),
                line: o as u32 + 1,
                text: line.to_string(),
            });
        }
    }
    changes
}

/// Matched (old_index, new_index) pairs of a line-level LCS.
fn lcs_line_matches(old: &[&str], new: &[&str]) -> Vec<(usize, usize)> {
    let mut prefix = 0;
    while prefix < old.len() && prefix < new.len() && old[prefix] == new[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < old.len() - prefix
        && suffix < new.len() - prefix
        && old[old.len() - 1 - suffix] == new[new.len() - 1 - suffix]
    {
        suffix += 1;
    }
    let o_mid = &old[prefix..old.len() - suffix];
    let n_mid = &new[prefix..new.len() - suffix];

    let mut matches: Vec<(usize, usize)> = (0..prefix).map(|i| (i, i)).collect();
    // Beyond this the alignment is not worth the table; unmatched middle
    // directives then report without old-line mapping, which callers treat
    // as unauditable rather than wrong.
    if !o_mid.is_empty() && !n_mid.is_empty() && o_mid.len() * n_mid.len() <= 16_000_000 {
        let n = o_mid.len();
        let m = n_mid.len();
        let stride = m + 1;
        let mut dp = vec![0u32; (n + 1) * stride];
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                dp[i * stride + j] = if o_mid[i] == n_mid[j] {
                    dp[(i + 1) * stride + j + 1] + 1
                } else {
                    dp[(i + 1) * stride + j].max(dp[i * stride + j + 1])
                };
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < n && j < m {
            if o_mid[i] == n_mid[j] {
                matches.push((prefix + i, prefix + j));
                i += 1;
                j += 1;
            } else if dp[(i + 1) * stride + j] >= dp[i * stride + j + 1] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    for k in 0..suffix {
        matches.push((old.len() - suffix + k, new.len() - suffix + k));
    }
    matches
}
