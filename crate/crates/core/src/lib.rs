//! Engine for retrofitting type checking onto legacy JavaScript repositories.
//!
//! The pipeline: discover sources and snapshot their canonical token-stream
//! fingerprints, run the external type checker, partition errors into
//! per-file work orders, dispatch agent sessions (scripted or external over a
//! wire protocol) that fix or suppress errors under a behavior-preservation
//! hook, then verify, clean up unused directives, and report.
//!
//! Behavior preservation is enforced by [`fingerprint`]: two sources with
//! equal fingerprints differ only in comments and inter-token whitespace, so
//! annotation edits (JSDoc lives in comments) pass while code edits are
//! rejected with a token-level diff.

pub mod agent;
pub mod checker;
pub mod clock;
pub mod error;
pub mod events;
pub mod fingerprint;
pub mod orchestrator;
pub mod report;
pub mod suppression;
pub mod workspace;

pub use agent::{
    AgentBackend, BackendFactory, HookMode, HookVerdict, SessionOutcome, WorkOrder,
};
pub use checker::{Checker, Diagnostic, ErrorSnapshot, Severity, SnapshotDiff};
pub use error::Error;
pub use events::{EventLog, EventRecord, RunEvent};
pub use fingerprint::{fingerprint, token_diff, Fingerprint, Token, TokenDiff};
pub use orchestrator::{execute_run, RunExit, RunPlan, RunState};
pub use report::{build_report, render_table, RunReport};
pub use suppression::{Suppression, SuppressionCategory};
pub use workspace::{CheckerConfig, FileRecord, Phase};
