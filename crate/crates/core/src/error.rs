//! Crate-level error type aggregating the per-module errors.

use thiserror::Error;

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lex(#[from] crate::fingerprint::LexError),
    #[error(transparent)]
    Checker(#[from] crate::checker::CheckerError),
    #[error(transparent)]
    Workspace(#[from] crate::workspace::WorkspaceError),
    #[error(transparent)]
    Suppression(#[from] crate::suppression::SuppressionError),
    #[error(transparent)]
    EventLog(#[from] crate::events::EventLogError),
    #[error(transparent)]
    Report(#[from] crate::report::ReportError),
    #[error(transparent)]
    Orchestrator(#[from] crate::orchestrator::OrchestratorError),
}
