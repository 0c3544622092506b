//! Append-only run event log: JSON lines, one record per event.
//!
//! The log is the source of truth for the report module and for audits
//! (exclusive file ownership, hook verdicts, per-diagnostic accounting).
//! Records carry a format version and a monotonic timestamp.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::Diagnostic;
use crate::clock;
use crate::suppression::SuppressionCategory;
use crate::workspace::{Phase, SkippedFile, TypesPackage};

pub const EVENT_LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("cannot open event log {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot append to event log: {0}")]
    Write(#[from] std::io::Error),
    #[error("corrupt event log at line {line}: {reason}\n  offending line: {text}")]
    Corrupt { line: usize, reason: String, text: String },
}

/// Pipeline stage a snapshot was taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotStage {
    Initial,
    PostSessions,
    Round(u32),
    Final,
}

/// Session scheduling wave: 0 is the initial parallel wave, 1..=R are the
/// sequential verification rounds.
pub type Round = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    RunStarted {
        root: String,
        phase: Phase,
        parallelism: usize,
        hook_mode: String,
        backend: String,
        verification_rounds: u32,
        dry_run: bool,
    },
    SourcesDiscovered {
        files: usize,
        total_loc: u64,
        skipped: Vec<SkippedFile>,
    },
    Snapshot {
        stage: SnapshotStage,
        total: usize,
        diagnostics: Vec<Diagnostic>,
    },
    MissingTypes {
        packages: Vec<TypesPackage>,
        warnings: Vec<String>,
    },
    WorkPlanned {
        orders: Vec<PlannedOrder>,
    },
    SessionStarted {
        path: String,
        round: Round,
        attempt: u32,
    },
    ToolCall {
        path: String,
        round: Round,
        tool: String,
    },
    HookVerdict {
        path: String,
        round: Round,
        accepted: bool,
        reason: Option<String>,
        edits: usize,
    },
    SuppressionInserted {
        path: String,
        round: Round,
        anchor_line: u32,
        category: SuppressionCategory,
        explanation: String,
        codes: Vec<String>,
        anchor_content_hash: String,
        directive_text: String,
        /// The diagnostics this directive silenced, for per-diagnostic audit.
        covered: Vec<CoveredDiagnostic>,
    },
    DirectiveRemoved {
        path: String,
        line: u32,
        text: String,
        removed_by: RemovedBy,
    },
    SessionFinished {
        path: String,
        round: Round,
        status: String,
        turns_used: u32,
        tokens_in: u64,
        tokens_out: u64,
        suppressions: usize,
    },
    RoundStarted {
        round: Round,
        remaining_errors: usize,
        files: Vec<String>,
    },
    RunInterrupted,
    RunFinished {
        exit_code: i32,
        wall_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedOrder {
    pub path: String,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveredDiagnostic {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovedBy {
    Agent,
    Cleanup,
}

/// One log line: version, monotonic timestamp, payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub v: u32,
    pub ts_ms: u64,
    #[serde(flatten)]
    pub event: RunEvent,
}

enum Sink {
    File(BufWriter<File>),
    Memory(Vec<EventRecord>),
}

/// Append-only event log shared across workers.
pub struct EventLog {
    sink: Mutex<Sink>,
}

impl EventLog {
    /// Create (truncate) a log file at `path`.
    pub fn to_file(path: &Path) -> Result<Self, EventLogError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| EventLogError::Open {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| EventLogError::Open { path: path.display().to_string(), source: e })?;
        Ok(EventLog { sink: Mutex::new(Sink::File(BufWriter::new(file))) })
    }

    /// Keep records in memory; useful for library callers and tests.
    pub fn in_memory() -> Self {
        EventLog { sink: Mutex::new(Sink::Memory(Vec::new())) }
    }

    pub fn append(&self, event: RunEvent) {
        let record = EventRecord { v: EVENT_LOG_VERSION, ts_ms: clock::monotonic_ms(), event };
        let mut sink = self.sink.lock().expect("event log lock poisoned");
        match &mut *sink {
            Sink::File(w) => {
                // Loses nothing silently: failure to log is a panic, since
                // the log is the audit trail.
                let line = serde_json::to_string(&record).expect("event serializes");
                writeln!(w, "{line}").expect("event log append failed");
                w.flush().expect("event log flush failed");
            }
            Sink::Memory(v) => v.push(record),
        }
    }

    /// Records accumulated by an in-memory log.
    pub fn records(&self) -> Vec<EventRecord> {
        match &*self.sink.lock().expect("event log lock poisoned") {
            Sink::Memory(v) => v.clone(),
            Sink::File(_) => Vec::new(),
        }
    }
}

/// Read a log file back. A malformed line is a hard error citing the line.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, EventLogError> {
    let file = File::open(path)
        .map_err(|e| EventLogError::Open { path: path.display().to_string(), source: e })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|e| EventLogError::Corrupt {
                line: idx + 1,
                reason: e.to_string(),
                text: line.clone(),
            })?;
        if record.v != EVENT_LOG_VERSION {
            return Err(EventLogError::Corrupt {
                line: idx + 1,
                reason: format!("unsupported version {}", record.v),
                text: line,
            });
        }
        out.push(record);
    }
    Ok(out)
}
