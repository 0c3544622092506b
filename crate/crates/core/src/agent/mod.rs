//! Per-file agent sessions: a pluggable backend exchanges tool calls
//! (read, edit, check, finish) against exactly one file, every edit gated by
//! the behavior-preservation hook, with a bounded verification retry loop.

mod external;
mod scripted;

pub use external::{ExternalBackend, ExternalFactory};
pub use scripted::{ClassificationMap, ScriptedBackend, ScriptedFactory};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{CheckScope, Checker, CheckerError, Diagnostic};
use crate::events::{CoveredDiagnostic, EventLog, RemovedBy, RunEvent};
use crate::fingerprint::{fingerprint, sha256_hex, token_diff, Fingerprint, TokenDiff};
use crate::suppression::{directive_changes, Suppression};

/// What the hook does with a token-changing edit: refuse it, or write it and
/// alert the backend with the diff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HookMode {
    Reject,
    Alert,
}

impl std::fmt::Display for HookMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HookMode::Reject => f.write_str("reject"),
            HookMode::Alert => f.write_str("alert"),
        }
    }
}

impl std::str::FromStr for HookMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reject" => Ok(HookMode::Reject),
            "alert" => Ok(HookMode::Alert),
            other => Err(format!("unknown hook mode {other:?} (expected reject or alert)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BehaviorChange,
    LexicalError,
    ForeignPath,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BehaviorChange => "behavior_change",
            RejectReason::LexicalError => "lexical_error",
            RejectReason::ForeignPath => "foreign_path",
        }
    }
}

/// Outcome of passing one edit through the hook. `diff` is present whenever
/// the edit changes tokens (the rejection case, or the accepted-with-alert
/// case); `reason` is present iff the edit was refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookVerdict {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<TokenDiff>,
    /// Human-readable detail (e.g. the lexical error).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl HookVerdict {
    fn accepted() -> Self {
        HookVerdict { accepted: true, reason: None, diff: None, detail: None }
    }

    fn rejected(reason: RejectReason, diff: Option<TokenDiff>, detail: Option<String>) -> Self {
        HookVerdict { accepted: false, reason: Some(reason), diff, detail }
    }
}

/// The unit of agent work: one file, its diagnostics, and budgets.
#[derive(Debug, Clone)]
pub struct WorkOrder {
    pub path: String,
    /// Diagnostics for this file only.
    pub diagnostics: Vec<Diagnostic>,
    /// Tool-call budget per attempt.
    pub max_turns: u32,
    /// Verification retries.
    pub max_attempts: u32,
}

/// Whole-file replacement proposed by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditProposal {
    pub path: String,
    pub new_content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Resolved,
    Exhausted,
    BackendFailure,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Resolved => "resolved",
            SessionStatus::Exhausted => "exhausted",
            SessionStatus::BackendFailure => "backend_failure",
        }
    }
}

/// One executed tool call (finish frames are not recorded; the transcript
/// length is bounded by max_turns × max_attempts).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tool: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub path: String,
    pub status: SessionStatus,
    pub suppressions_added: Vec<Suppression>,
    pub turns_used: u32,
    /// Zero for the scripted backend.
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub transcript: Vec<TranscriptEntry>,
}

/// Token usage reported by a backend for one exchange.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(rename = "in", default)]
    pub input: u64,
    #[serde(rename = "out", default)]
    pub output: u64,
}

/// The session view presented to a backend at the start of each attempt.
#[derive(Debug)]
pub struct TurnRequest<'a> {
    pub session: &'a str,
    pub file: &'a str,
    pub content: &'a str,
    pub diagnostics: &'a [Diagnostic],
    pub last_verdict: Option<&'a HookVerdict>,
}

/// Tool call issued by a backend.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolCall {
    ReadFile,
    EditFile { content: String },
    CheckFile,
    Finish,
}

impl ToolCall {
    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::ReadFile => "read_file",
            ToolCall::EditFile { .. } => "edit_file",
            ToolCall::CheckFile => "check_file",
            ToolCall::Finish => "finish",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub call: ToolCall,
    pub usage: Usage,
}

impl BackendReply {
    pub fn unmetered(call: ToolCall) -> Self {
        BackendReply { call, usage: Usage::default() }
    }
}

/// Result of executing a tool call, mirrored back to the backend.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolResult {
    ReadFile { content: String },
    EditFile { verdict: HookVerdict },
    CheckFile { diagnostics: Vec<Diagnostic> },
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("failed to spawn backend: {0}")]
    Spawn(std::io::Error),
    #[error("backend closed its stream")]
    ClosedStream,
    #[error("backend timed out after {0:.0?} waiting for a frame")]
    Timeout(std::time::Duration),
    #[error("backend protocol violation: {0}")]
    Protocol(String),
    #[error("backend io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A per-file agent policy. One backend instance serves one session.
pub trait AgentBackend: Send {
    /// Present the current file view; returns the first tool call.
    fn start(&mut self, req: &TurnRequest<'_>) -> Result<BackendReply, BackendError>;

    /// Deliver a tool result; returns the next tool call.
    fn next(&mut self, result: &ToolResult) -> Result<BackendReply, BackendError>;

    /// Deterministic backends skip pointless identical retries.
    fn deterministic(&self) -> bool {
        false
    }
}

/// Creates one backend per session; shared across workers.
pub trait BackendFactory: Send + Sync {
    fn create(&self) -> Result<Box<dyn AgentBackend>, BackendError>;
    fn label(&self) -> String;
}

/// Environment failures that abort the run (as opposed to backend failures,
/// which are recorded in the outcome and left for verification rounds).
#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Shared facilities a session runs against.
pub struct SessionContext<'a> {
    pub root: &'a Path,
    pub checker: &'a Checker,
    /// Fingerprints pinned at run start; edits compare against these, not
    /// against the previous edit, so behavior cannot drift stepwise.
    pub baselines: &'a BTreeMap<String, Fingerprint>,
    pub hook_mode: HookMode,
    pub events: &'a EventLog,
    /// 0 for the initial parallel wave; 1..=R for verification rounds.
    pub round: u32,
    pub cancel: Option<&'a AtomicBool>,
    /// When set, accepted edits stay in the session's view and are never
    /// written to disk; the session runs a single attempt with no
    /// verification check.
    pub dry_run: bool,
}

impl SessionContext<'_> {
    fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// Gate one whole-file edit on the behavior-preservation check and write it
/// out when allowed. The baseline is the fingerprint at run start.
pub fn apply_edit_hooked(
    root: &Path,
    proposal: &EditProposal,
    session_path: &str,
    baseline: &Fingerprint,
    mode: HookMode,
    write: bool,
) -> Result<HookVerdict, SessionError> {
    if proposal.path != session_path {
        return Ok(HookVerdict::rejected(
            RejectReason::ForeignPath,
            None,
            Some(format!(
                "session owns {session_path}; edit targeted {}",
                proposal.path
            )),
        ));
    }
    let new_fp = match fingerprint(&proposal.new_content) {
        Ok(fp) => fp,
        Err(e) => {
            return Ok(HookVerdict::rejected(
                RejectReason::LexicalError,
                None,
                Some(e.to_string()),
            ));
        }
    };
    if new_fp == *baseline {
        if write {
            write_file(root, session_path, &proposal.new_content)?;
        }
        return Ok(HookVerdict::accepted());
    }
    let diff = token_diff(baseline, &new_fp);
    match mode {
        HookMode::Reject => Ok(HookVerdict::rejected(RejectReason::BehaviorChange, Some(diff), None)),
        HookMode::Alert => {
            if write {
                write_file(root, session_path, &proposal.new_content)?;
            }
            Ok(HookVerdict { accepted: true, reason: None, diff: Some(diff), detail: None })
        }
    }
}

fn write_file(root: &Path, rel: &str, content: &str) -> Result<(), SessionError> {
    std::fs::write(root.join(rel), content)
        .map_err(|e| SessionError::Io { path: rel.to_string(), source: e })
}

fn read_file(root: &Path, rel: &str) -> Result<String, SessionError> {
    std::fs::read_to_string(root.join(rel))
        .map_err(|e| SessionError::Io { path: rel.to_string(), source: e })
}

/// Drive one agent session to completion.
///
/// Each attempt presents the file and its diagnostics to the backend and
/// mediates tool calls until the backend finishes or the turn budget runs
/// out; a file-scoped verification check then either resolves the session or
/// feeds the remaining errors into the next attempt, up to `max_attempts`.
/// Backend failures leave the file at its last accepted edit, which the hook
/// guarantees is behavior-equivalent to baseline.
pub fn run_session(
    order: &WorkOrder,
    backend: &mut dyn AgentBackend,
    ctx: &SessionContext<'_>,
) -> Result<SessionOutcome, SessionError> {
    let mut outcome = SessionOutcome {
        path: order.path.clone(),
        status: SessionStatus::Exhausted,
        suppressions_added: Vec::new(),
        turns_used: 0,
        tokens_in: 0,
        tokens_out: 0,
        transcript: Vec::new(),
    };
    let session_id = format!("{}@round{}", order.path, ctx.round);
    let baseline = match ctx.baselines.get(&order.path) {
        Some(fp) => fp,
        None => {
            // Not part of the snapshotted source set; nothing an agent may
            // safely touch.
            outcome.status = SessionStatus::BackendFailure;
            outcome.transcript.push(TranscriptEntry {
                tool: "session".into(),
                detail: "no run-start baseline for this path".into(),
            });
            emit_finished(ctx, &outcome);
            return Ok(outcome);
        }
    };

    let mut visible: Vec<Diagnostic> =
        order.diagnostics.iter().filter(|d| d.path == order.path).cloned().collect();
    let mut last_verdict: Option<HookVerdict> = None;
    let mut content_view = read_file(ctx.root, &order.path)?;

    for attempt in 1..=order.max_attempts.max(1) {
        if visible.is_empty() {
            outcome.status = SessionStatus::Resolved;
            break;
        }
        ctx.events.append(RunEvent::SessionStarted {
            path: order.path.clone(),
            round: ctx.round,
            attempt,
        });
        let attempt_start_content = content_view.clone();
        let req = TurnRequest {
            session: &session_id,
            file: &order.path,
            content: &content_view,
            diagnostics: &visible,
            last_verdict: last_verdict.as_ref(),
        };
        let mut reply = match backend.start(&req) {
            Ok(r) => r,
            Err(e) => {
                return finish_backend_failure(ctx, outcome, e, &attempt_start_content, &content_view, &visible);
            }
        };
        let mut turns_this_attempt = 0u32;
        let mut edits_this_attempt = 0u32;
        loop {
            outcome.tokens_in += reply.usage.input;
            outcome.tokens_out += reply.usage.output;
            if matches!(reply.call, ToolCall::Finish) {
                break;
            }
            if turns_this_attempt >= order.max_turns || ctx.cancelled() {
                break;
            }
            turns_this_attempt += 1;
            outcome.turns_used += 1;
            ctx.events.append(RunEvent::ToolCall {
                path: order.path.clone(),
                round: ctx.round,
                tool: reply.call.name().to_string(),
            });
            let result = match &reply.call {
                ToolCall::ReadFile => {
                    outcome.transcript.push(TranscriptEntry {
                        tool: "read_file".into(),
                        detail: format!("{} bytes", content_view.len()),
                    });
                    ToolResult::ReadFile { content: content_view.clone() }
                }
                ToolCall::EditFile { content } => {
                    edits_this_attempt += 1;
                    let proposal =
                        EditProposal { path: order.path.clone(), new_content: content.clone() };
                    let verdict = apply_edit_hooked(
                        ctx.root,
                        &proposal,
                        &order.path,
                        baseline,
                        ctx.hook_mode,
                        !ctx.dry_run,
                    )?;
                    ctx.events.append(RunEvent::HookVerdict {
                        path: order.path.clone(),
                        round: ctx.round,
                        accepted: verdict.accepted,
                        reason: verdict.reason.map(|r| r.as_str().to_string()),
                        edits: verdict.diff.as_ref().map_or(0, |d| d.edits.len()),
                    });
                    outcome.transcript.push(TranscriptEntry {
                        tool: "edit_file".into(),
                        detail: if verdict.accepted {
                            "accepted".into()
                        } else {
                            format!(
                                "rejected: {}",
                                verdict.reason.map_or("unknown", |r| r.as_str())
                            )
                        },
                    });
                    if verdict.accepted {
                        content_view = proposal.new_content;
                    }
                    last_verdict = Some(verdict.clone());
                    ToolResult::EditFile { verdict }
                }
                ToolCall::CheckFile => {
                    let snap = ctx.checker.run_check(&CheckScope::Single(order.path.clone()))?;
                    let diags = snap.errors_for(&order.path).to_vec();
                    outcome.transcript.push(TranscriptEntry {
                        tool: "check_file".into(),
                        detail: format!("{} errors", diags.len()),
                    });
                    ToolResult::CheckFile { diagnostics: diags }
                }
                ToolCall::Finish => unreachable!("finish handled above"),
            };
            reply = match backend.next(&result) {
                Ok(r) => r,
                Err(e) => {
                    return finish_backend_failure(ctx, outcome, e, &attempt_start_content, &content_view, &visible);
                }
            };
        }

        record_directive_changes(ctx, &mut outcome, &attempt_start_content, &content_view, &visible);

        if ctx.dry_run {
            outcome.status = SessionStatus::Exhausted;
            break;
        }
        if ctx.cancelled() {
            outcome.status = SessionStatus::Exhausted;
            break;
        }

        let snap = ctx.checker.run_check(&CheckScope::Single(order.path.clone()))?;
        visible = snap.errors_for(&order.path).to_vec();
        if visible.is_empty() {
            outcome.status = SessionStatus::Resolved;
            break;
        }
        // A deterministic backend that did nothing will do nothing again.
        if backend.deterministic() && turns_this_attempt == 0 && edits_this_attempt == 0 {
            outcome.status = SessionStatus::Exhausted;
            break;
        }
    }

    emit_finished(ctx, &outcome);
    Ok(outcome)
}

fn finish_backend_failure(
    ctx: &SessionContext<'_>,
    mut outcome: SessionOutcome,
    err: BackendError,
    attempt_start_content: &str,
    content_view: &str,
    visible: &[Diagnostic],
) -> Result<SessionOutcome, SessionError> {
    record_directive_changes(ctx, &mut outcome, attempt_start_content, content_view, visible);
    outcome.status = SessionStatus::BackendFailure;
    outcome
        .transcript
        .push(TranscriptEntry { tool: "backend".into(), detail: err.to_string() });
    emit_finished(ctx, &outcome);
    Ok(outcome)
}

fn emit_finished(ctx: &SessionContext<'_>, outcome: &SessionOutcome) {
    ctx.events.append(RunEvent::SessionFinished {
        path: outcome.path.clone(),
        round: ctx.round,
        status: outcome.status.as_str().to_string(),
        turns_used: outcome.turns_used,
        tokens_in: outcome.tokens_in,
        tokens_out: outcome.tokens_out,
        suppressions: outcome.suppressions_added.len(),
    });
}

/// Derive the directives this attempt added or removed by aligning the
/// attempt's start and end content, and log them with the diagnostics each
/// one silenced (matched through the visible set at insertion time).
fn record_directive_changes(
    ctx: &SessionContext<'_>,
    outcome: &mut SessionOutcome,
    attempt_start: &str,
    attempt_end: &str,
    visible: &[Diagnostic],
) {
    if attempt_start == attempt_end {
        return;
    }
    let changes = directive_changes(&outcome.path, attempt_start, attempt_end);
    for added in changes.added {
        let covered: Vec<&Diagnostic> = match added.anchor_line_old {
            Some(old_line) => visible.iter().filter(|d| d.line == old_line).collect(),
            None => Vec::new(),
        };
        let mut codes: Vec<String> = covered.iter().map(|d| d.code.clone()).collect();
        codes.sort();
        codes.dedup();
        let suppression = Suppression {
            path: outcome.path.clone(),
            anchor_line: added.anchor_line_new,
            category: added.category,
            explanation: added.explanation.clone(),
            suppressed_codes: codes.clone(),
        };
        ctx.events.append(RunEvent::SuppressionInserted {
            path: outcome.path.clone(),
            round: ctx.round,
            anchor_line: added.anchor_line_new,
            category: added.category,
            explanation: added.explanation,
            codes,
            anchor_content_hash: sha256_hex(added.anchor_text.as_bytes()),
            directive_text: added.directive_text,
            covered: covered
                .iter()
                .map(|d| CoveredDiagnostic { code: d.code.clone(), message: d.message.clone() })
                .collect(),
        });
        outcome.suppressions_added.push(suppression);
    }
    for removed in changes.removed {
        ctx.events.append(RunEvent::DirectiveRemoved {
            path: removed.path,
            line: removed.line,
            text: removed.text,
            removed_by: RemovedBy::Agent,
        });
    }
}
