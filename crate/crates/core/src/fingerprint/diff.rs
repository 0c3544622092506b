//! Token-level edit scripts between two fingerprints, for hook feedback.

use serde::{Deserialize, Serialize};

use super::{Fingerprint, Token};

/// Sizes beyond which the LCS table is not worth building; the diff
/// degrades to a single replace of the whole differing middle.
const LCS_CELL_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

/// One edit over before-stream token positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEdit {
    pub kind: EditKind,
    /// Index into the before-stream where the edit applies.
    pub at: usize,
    /// Nearest original line number, for human- and agent-readable feedback.
    pub line: u32,
    pub removed: Vec<Token>,
    pub added: Vec<Token>,
}

/// Ordered edit script; applying it to the before-stream yields the
/// after-stream. Empty iff the fingerprints are equal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenDiff {
    pub edits: Vec<TokenEdit>,
}

impl TokenDiff {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// Replay the script against a before-stream. Edits are ordered and
    /// non-overlapping by construction.
    pub fn apply(&self, before: &[Token]) -> Vec<Token> {
        let mut out = Vec::with_capacity(before.len());
        let mut idx = 0;
        for e in &self.edits {
            out.extend_from_slice(&before[idx..e.at]);
            out.extend(e.added.iter().cloned());
            idx = e.at + e.removed.len();
        }
        out.extend_from_slice(&before[idx..]);
        out
    }

    /// One line per edit, e.g. `line 12: replace "+" -> "-"`.
    pub fn render_lines(&self) -> Vec<String> {
        self.edits.iter().map(render_edit).collect()
    }
}

fn render_edit(e: &TokenEdit) -> String {
    let show = |ts: &[Token]| {
        ts.iter().map(|t| format!("{:?}", t.lexeme)).collect::<Vec<_>>().join(" ")
    };
    match e.kind {
        EditKind::Insert => format!("line {}: insert {}", e.line, show(&e.added)),
        EditKind::Delete => format!("line {}: delete {}", e.line, show(&e.removed)),
        EditKind::Replace => {
            format!("line {}: replace {} -> {}", e.line, show(&e.removed), show(&e.added))
        }
    }
}

/// Edit script from `before` to `after` via longest-common-subsequence over
/// tokens, with common prefix/suffix trimmed first.
pub fn token_diff(before: &Fingerprint, after: &Fingerprint) -> TokenDiff {
    if before == after {
        return TokenDiff::default();
    }
    let b = before.tokens();
    let a = after.tokens();

    let mut prefix = 0;
    while prefix < b.len() && prefix < a.len() && b[prefix] == a[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < b.len() - prefix && suffix < a.len() - prefix
        && b[b.len() - 1 - suffix] == a[a.len() - 1 - suffix]
    {
        suffix += 1;
    }
    let b_mid = &b[prefix..b.len() - suffix];
    let a_mid = &a[prefix..a.len() - suffix];

    let mut edits = Vec::new();
    if b_mid.is_empty() || a_mid.is_empty() || b_mid.len() * a_mid.len() > LCS_CELL_LIMIT {
        // Nothing in common to align (or too large to bother): one edit
        // covering the whole middle.
        push_edit(&mut edits, before, prefix, b_mid.to_vec(), a_mid.to_vec());
    } else {
        lcs_edits(&mut edits, before, prefix, b_mid, a_mid);
    }
    TokenDiff { edits }
}

fn push_edit(
    edits: &mut Vec<TokenEdit>,
    before: &Fingerprint,
    at: usize,
    removed: Vec<Token>,
    added: Vec<Token>,
) {
    debug_assert!(!(removed.is_empty() && added.is_empty()));
    let kind = if removed.is_empty() {
        EditKind::Insert
    } else if added.is_empty() {
        EditKind::Delete
    } else {
        EditKind::Replace
    };
    let line = before.token_line(at.saturating_sub(if removed.is_empty() { 1 } else { 0 }));
    edits.push(TokenEdit { kind, at, line, removed, added });
}

fn lcs_edits(
    edits: &mut Vec<TokenEdit>,
    before: &Fingerprint,
    offset: usize,
    b: &[Token],
    a: &[Token],
) {
    let n = b.len();
    let m = a.len();
    // dp[i][j] = LCS length of b[i..], a[j..]; row-major (m + 1) stride.
    let stride = m + 1;
    let mut dp = vec![0u32; (n + 1) * stride];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i * stride + j] = if b[i] == a[j] {
                dp[(i + 1) * stride + j + 1] + 1
            } else {
                dp[(i + 1) * stride + j].max(dp[i * stride + j + 1])
            };
        }
    }

    let (mut i, mut j) = (0, 0);
    let mut pending_at = 0usize;
    let mut removed: Vec<Token> = Vec::new();
    let mut added: Vec<Token> = Vec::new();
    macro_rules! flush {
        () => {
            if !removed.is_empty() || !added.is_empty() {
                push_edit(
                    edits,
                    before,
                    offset + pending_at,
                    std::mem::take(&mut removed),
                    std::mem::take(&mut added),
                );
            }
        };
    }
    while i < n || j < m {
        if i < n && j < m && b[i] == a[j] {
            flush!();
            i += 1;
            j += 1;
        } else {
            if removed.is_empty() && added.is_empty() {
                pending_at = i;
            }
            // Prefer consuming from the before-stream on ties.
            if j >= m || (i < n && dp[(i + 1) * stride + j] >= dp[i * stride + j + 1]) {
                removed.push(b[i].clone());
                i += 1;
            } else {
                added.push(a[j].clone());
                j += 1;
            }
        }
    }
    flush!();
}
