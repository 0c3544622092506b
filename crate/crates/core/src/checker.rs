//! Adapter around the external type checker: subprocess invocation, textual
//! diagnostic parsing, and snapshot diffing.
//!
//! The checker is invoked with the project config in its machine-stable
//! plain output mode; the diagnostic line grammar below is only stable in
//! that mode:
//!
//! ```text
//! <path>(<line>,<col>): <severity> <CODE>: <message>
//! ```
//!
//! Continuation lines (indented) are appended to the preceding diagnostic's
//! message; summary lines and blanks parse as not-a-diagnostic.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock;

/// Diagnostic severity. Warnings are parsed but excluded from error totals
/// and work orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Severity::Error => f.write_str("error"),
            Severity::Warning => f.write_str("warning"),
        }
    }
}

/// One structured type-checker diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Repo-relative path, forward slashes.
    pub path: String,
    /// 1-based.
    pub line: u32,
    /// 1-based.
    pub column: u32,
    /// Short identifier, uppercase prefix + digits (e.g. `TS2339`).
    pub code: String,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    /// Re-render in the plain-output grammar. For multi-line messages this
    /// reproduces the whole captured block byte-for-byte.
    pub fn render_line(&self) -> String {
        format!(
            "{}({},{}): {} {}: {}",
            self.path, self.line, self.column, self.severity, self.code, self.message
        )
    }

    /// Position-insensitive identity used for snapshot diffing, so that
    /// pure line shifts from comment insertion do not register as churn.
    pub fn identity(&self) -> DiagnosticIdentity {
        DiagnosticIdentity {
            path: self.path.clone(),
            code: self.code.clone(),
            message: normalize_message(&self.message),
        }
    }
}

/// Multiset key for resolved/introduced accounting: (path, code, normalized
/// message), positions excluded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiagnosticIdentity {
    pub path: String,
    pub code: String,
    pub message: String,
}

/// Collapse whitespace runs (including the newlines of continuation lines)
/// to single spaces and trim.
pub fn normalize_message(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn diagnostic_line_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([^()\s][^()]*)\((\d+),(\d+)\): (error|warning) ([A-Z]+\d+): (.*)$")
            .expect("diagnostic grammar regex")
    })
}

/// Parse a single output line. Summary lines, blanks, and continuation
/// fragments return `None`; the stream parser handles continuations.
pub fn parse_diagnostic_line(line: &str) -> Option<Diagnostic> {
    let caps = diagnostic_line_re().captures(line)?;
    Some(Diagnostic {
        path: normalize_path(&caps[1]),
        line: caps[2].parse().ok()?,
        column: caps[3].parse().ok()?,
        severity: if &caps[4] == "error" { Severity::Error } else { Severity::Warning },
        code: caps[5].to_string(),
        message: caps[6].to_string(),
    })
}

/// Parse a whole plain-mode output stream, folding indented continuation
/// lines into the preceding diagnostic's message.
pub fn parse_checker_output(output: &str) -> Vec<Diagnostic> {
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut open = false;
    for line in output.lines() {
        if let Some(d) = parse_diagnostic_line(line) {
            diags.push(d);
            open = true;
        } else if open && (line.starts_with(' ') || line.starts_with('\t')) {
            let msg = &mut diags.last_mut().expect("open diagnostic").message;
            msg.push('\n');
            msg.push_str(line);
        } else {
            open = false;
        }
    }
    diags
}

fn normalize_path(p: &str) -> String {
    let p = p.replace('\\', "/");
    p.strip_prefix("./").unwrap_or(&p).to_string()
}

/// Point-in-time view of all checker errors, grouped per file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorSnapshot {
    /// Monotonic timestamp (process epoch).
    pub taken_at: Duration,
    by_file: BTreeMap<String, Vec<Diagnostic>>,
    pub total: usize,
    /// Parsed but never counted toward totals or work orders.
    pub warnings: Vec<Diagnostic>,
}

impl ErrorSnapshot {
    pub fn from_diagnostics(diags: Vec<Diagnostic>) -> Self {
        let mut by_file: BTreeMap<String, Vec<Diagnostic>> = BTreeMap::new();
        let mut warnings = Vec::new();
        for d in diags {
            match d.severity {
                Severity::Error => by_file.entry(d.path.clone()).or_default().push(d),
                Severity::Warning => warnings.push(d),
            }
        }
        for list in by_file.values_mut() {
            list.sort_by(|a, b| {
                (a.line, a.column, &a.code).cmp(&(b.line, b.column, &b.code))
            });
        }
        warnings.sort_by(|a, b| {
            (&a.path, a.line, a.column, &a.code).cmp(&(&b.path, b.line, b.column, &b.code))
        });
        let total = by_file.values().map(Vec::len).sum();
        ErrorSnapshot { taken_at: clock::monotonic_now(), by_file, total, warnings }
    }

    pub fn by_file(&self) -> &BTreeMap<String, Vec<Diagnostic>> {
        &self.by_file
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.by_file.values().flatten()
    }

    pub fn errors_for(&self, path: &str) -> &[Diagnostic] {
        self.by_file.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_clean(&self) -> bool {
        self.total == 0
    }
}

/// Multiset difference of two snapshots, keyed position-insensitively.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotDiff {
    pub resolved: Vec<Diagnostic>,
    pub introduced: Vec<Diagnostic>,
}

/// `resolved` = before ∖ after, `introduced` = after ∖ before, both as
/// multisets over [`Diagnostic::identity`].
pub fn diff_snapshots(before: &ErrorSnapshot, after: &ErrorSnapshot) -> SnapshotDiff {
    SnapshotDiff {
        resolved: multiset_subtract(before.errors(), after.errors()),
        introduced: multiset_subtract(after.errors(), before.errors()),
    }
}

/// Diagnostics of `keep` whose identity is not matched (with multiplicity)
/// in `drop`.
fn multiset_subtract<'a>(
    keep: impl Iterator<Item = &'a Diagnostic>,
    drop: impl Iterator<Item = &'a Diagnostic>,
) -> Vec<Diagnostic> {
    let mut budget: HashMap<DiagnosticIdentity, usize> = HashMap::new();
    for d in drop {
        *budget.entry(d.identity()).or_default() += 1;
    }
    let mut out = Vec::new();
    for d in keep {
        match budget.get_mut(&d.identity()) {
            Some(n) if *n > 0 => *n -= 1,
            _ => out.push(d.clone()),
        }
    }
    out
}

/// Full-repo or single-file check scope. Single-file checks are
/// project-scoped: the whole program is checked and the parsed diagnostics
/// are filtered to the path, because cross-file types make isolated checks
/// unsound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckScope {
    AllFiles,
    Single(String),
}

#[derive(Debug, Error)]
pub enum CheckerError {
    #[error("checker executable not found; {hint}")]
    NotFound { hint: String },
    #[error("failed to invoke checker {program}: {source}")]
    Invoke {
        program: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "checker exited with {status} and no parseable diagnostics; captured output:\n{output}"
    )]
    Crashed { status: String, output: String },
}

/// Serialized access to the external checker for one repository. The lock
/// is repository-level: the checker reads shared config and caches.
#[derive(Debug)]
pub struct Checker {
    program: PathBuf,
    root: PathBuf,
    lock: Mutex<()>,
}

impl Checker {
    /// Resolution order: explicit path, then the project-local installation,
    /// then the executable search path.
    pub fn resolve(root: &Path, explicit: Option<&Path>) -> Result<Self, CheckerError> {
        if let Some(p) = explicit {
            return Ok(Checker::with_program(root, p.to_path_buf()));
        }
        let local = root.join("node_modules/.bin/tsc");
        if local.is_file() {
            return Ok(Checker::with_program(root, local));
        }
        if let Some(paths) = std::env::var_os("PATH") {
            for dir in std::env::split_paths(&paths) {
                let candidate = dir.join("tsc");
                if candidate.is_file() {
                    return Ok(Checker::with_program(root, candidate));
                }
            }
        }
        Err(CheckerError::NotFound {
            hint: "install typescript (e.g. `npm install --save-dev typescript`) or pass \
                   --checker <path>"
                .to_string(),
        })
    }

    pub fn with_program(root: &Path, program: PathBuf) -> Self {
        Checker { program, root: root.to_path_buf(), lock: Mutex::new(()) }
    }

    pub fn program(&self) -> &Path {
        &self.program
    }

    /// Run the checker and parse its output into a snapshot. An exit status
    /// of "errors found" is normal; a non-diagnostic non-zero exit aborts
    /// with the captured output attached.
    pub fn run_check(&self, scope: &CheckScope) -> Result<ErrorSnapshot, CheckerError> {
        let _guard = self.lock.lock().expect("checker lock poisoned");
        let output = Command::new(&self.program)
            .current_dir(&self.root)
            .args(["-p", ".", "--pretty", "false"])
            .output()
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    CheckerError::NotFound {
                        hint: format!("{} does not exist", self.program.display()),
                    }
                } else {
                    CheckerError::Invoke { program: self.program.clone(), source: e }
                }
            })?;
        let stdout = String::from_utf8_lossy(&output.stdout);
        let mut diags = parse_checker_output(&stdout);
        if !output.status.success() && diags.is_empty() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(CheckerError::Crashed {
                status: output.status.to_string(),
                output: format!("{stdout}{stderr}"),
            });
        }
        if let CheckScope::Single(path) = scope {
            let want = normalize_path(path);
            diags.retain(|d| d.path == want);
        }
        Ok(ErrorSnapshot::from_diagnostics(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN_LINE: &str =
        "src/a.js(12,5): error TS2339: Property 'foo' does not exist on type 'Bar'.";

    #[test]
    fn golden_line_parses() {
        let d = parse_diagnostic_line(GOLDEN_LINE).unwrap();
        assert_eq!(d.path, "src/a.js");
        assert_eq!(d.line, 12);
        assert_eq!(d.column, 5);
        assert_eq!(d.code, "TS2339");
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.message, "Property 'foo' does not exist on type 'Bar'.");
    }

    #[test]
    fn golden_line_round_trips() {
        let d = parse_diagnostic_line(GOLDEN_LINE).unwrap();
        assert_eq!(d.render_line(), GOLDEN_LINE);
    }

    #[test]
    fn summary_and_blank_lines_are_not_diagnostics() {
        assert!(parse_diagnostic_line("Found 3 errors in 2 files.").is_none());
        assert!(parse_diagnostic_line("").is_none());
        assert!(parse_diagnostic_line("error TS5081: Cannot find a tsconfig.json file.").is_none());
    }

    #[test]
    fn continuation_lines_fold_into_message() {
        let out = "src/c.js(5,1): error TS2349: This expression is not callable.\n  \
                   Type 'Number' has no call signatures.\nsrc/c.js(7,1): error TS2304: \
                   Cannot find name 'x'.\n";
        let diags = parse_checker_output(out);
        assert_eq!(diags.len(), 2);
        assert_eq!(
            diags[0].message,
            "This expression is not callable.\n  Type 'Number' has no call signatures."
        );
        // Round trip of the multi-line block.
        assert_eq!(
            diags[0].render_line(),
            "src/c.js(5,1): error TS2349: This expression is not callable.\n  \
             Type 'Number' has no call signatures."
        );
    }

    #[test]
    fn warnings_split_from_errors() {
        let out = "a.js(1,1): warning TS0001: mind this.\na.js(2,1): error TS1000: broken.\n";
        let snap = ErrorSnapshot::from_diagnostics(parse_checker_output(out));
        assert_eq!(snap.total, 1);
        assert_eq!(snap.warnings.len(), 1);
        assert!(snap.errors_for("a.js").iter().all(|d| d.severity == Severity::Error));
    }

    #[test]
    fn snapshot_orders_within_file() {
        let out = "a.js(10,2): error TS2: b.\na.js(2,9): error TS1: a.\na.js(2,1): error TS3: c.\n";
        let snap = ErrorSnapshot::from_diagnostics(parse_checker_output(out));
        let positions: Vec<(u32, u32)> =
            snap.errors_for("a.js").iter().map(|d| (d.line, d.column)).collect();
        assert_eq!(positions, vec![(2, 1), (2, 9), (10, 2)]);
        assert_eq!(snap.total, 3);
    }

    fn diag(path: &str, line: u32, code: &str, msg: &str) -> Diagnostic {
        Diagnostic {
            path: path.into(),
            line,
            column: 1,
            code: code.into(),
            message: msg.into(),
            severity: Severity::Error,
        }
    }

    #[test]
    fn diff_of_identical_snapshots_is_empty() {
        let s = ErrorSnapshot::from_diagnostics(vec![diag("a.js", 1, "TS1", "m")]);
        let d = diff_snapshots(&s, &s);
        assert!(d.resolved.is_empty() && d.introduced.is_empty());
    }

    #[test]
    fn diff_set_algebra() {
        let before = ErrorSnapshot::from_diagnostics(vec![
            diag("a.js", 1, "TS1", "first"),
            diag("a.js", 5, "TS2", "second"),
        ]);
        let after = ErrorSnapshot::from_diagnostics(vec![
            diag("a.js", 5, "TS2", "second"),
            diag("b.js", 2, "TS9", "new"),
        ]);
        let d = diff_snapshots(&before, &after);
        assert_eq!(d.resolved.len(), 1);
        assert_eq!(d.resolved[0].code, "TS1");
        assert_eq!(d.introduced.len(), 1);
        assert_eq!(d.introduced[0].path, "b.js");
    }

    #[test]
    fn line_shift_is_not_churn() {
        let before = ErrorSnapshot::from_diagnostics(vec![diag("a.js", 20, "TS1", "same msg")]);
        let after = ErrorSnapshot::from_diagnostics(vec![diag("a.js", 21, "TS1", "same msg")]);
        let d = diff_snapshots(&before, &after);
        assert!(d.resolved.is_empty() && d.introduced.is_empty());
    }

    #[test]
    fn diff_partitions_symmetric_difference() {
        let before = ErrorSnapshot::from_diagnostics(vec![
            diag("a.js", 1, "TS1", "x"),
            diag("a.js", 2, "TS1", "x"),
        ]);
        let after = ErrorSnapshot::from_diagnostics(vec![diag("a.js", 9, "TS1", "x")]);
        let d = diff_snapshots(&before, &after);
        // Two identical-identity errors collapse to multiset counts.
        assert_eq!(d.resolved.len(), 1);
        assert!(d.introduced.is_empty());
    }

    #[test]
    fn normalized_message_collapses_internal_whitespace() {
        assert_eq!(normalize_message("a\n  b   c "), "a b c");
    }
}
