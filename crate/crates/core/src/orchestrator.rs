//! Drives a full run: initial snapshot, missing-types resolution, work
//! partitioning, a K-wide worker pool over per-file sessions, sequential
//! cross-file verification rounds, unused-directive cleanup, and the final
//! snapshot.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use thiserror::Error;

use crate::agent::{
    run_session, BackendFactory, ClassificationMap, HookMode, SessionContext, SessionError,
    SessionOutcome, WorkOrder,
};
use crate::checker::{CheckScope, Checker, CheckerError, Diagnostic, ErrorSnapshot};
use crate::clock;
use crate::events::{EventLog, PlannedOrder, RemovedBy, RunEvent, SnapshotStage};
use crate::fingerprint::Fingerprint;
use crate::suppression::{cleanup_unused, RemovedDirective, SuppressionError, UNUSED_DIRECTIVE_CODE};
use crate::workspace::{
    self, append_dev_dependencies, discover_sources, resolve_missing_types, CheckerConfig,
    MissingTypesResolution, Phase, WorkspaceError,
};

/// Everything a run needs besides the repository itself.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub phase: Phase,
    /// Concurrent agent sessions.
    pub parallelism: usize,
    pub hook_mode: HookMode,
    /// Post-wave verification rounds before giving up.
    pub verification_rounds: u32,
    pub classification: ClassificationMap,
    pub missing_decl_codes: Vec<String>,
    pub max_turns: u32,
    pub max_attempts: u32,
    /// Preview mode: nothing is written, sessions report intended edits.
    pub dry_run: bool,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            phase: Phase::MinimalSetup,
            parallelism: 10,
            hook_mode: HookMode::Reject,
            verification_rounds: 3,
            classification: ClassificationMap::default(),
            missing_decl_codes: workspace::default_missing_decl_codes(),
            max_turns: 30,
            max_attempts: 3,
            dry_run: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunExit {
    Success,
    Unresolved,
    Environment,
}

impl RunExit {
    pub fn code(self) -> i32 {
        match self {
            RunExit::Success => 0,
            RunExit::Unresolved => 1,
            RunExit::Environment => 2,
        }
    }
}

/// Observable result of a run; the event log carries the full audit trail.
#[derive(Debug)]
pub struct RunState {
    pub initial_snapshot: ErrorSnapshot,
    pub missing_types: MissingTypesResolution,
    /// All session outcomes, ordered by (round, path) for determinism.
    pub outcomes: Vec<SessionOutcome>,
    pub round_snapshots: Vec<ErrorSnapshot>,
    /// Absent in dry runs.
    pub final_snapshot: Option<ErrorSnapshot>,
    pub removed_directives: Vec<RemovedDirective>,
    pub exit: RunExit,
    pub interrupted: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Suppression(#[from] SuppressionError),
    #[error("session environment failure: {0}")]
    Session(#[from] SessionError),
    #[error(
        "phase {0} is config-scaffolding only for now; agent execution is implemented for \
         phase minimal-setup"
    )]
    PhaseNotImplemented(Phase),
    #[error(
        "checker config at the repository root does not match phase {phase}; run init for this \
         phase first"
    )]
    ConfigMismatch { phase: Phase },
    #[error(
        "behavior-preservation audit failed: {path} no longer matches its run-start fingerprint"
    )]
    BaselineViolation { path: String },
    /// A backend that cannot even be created will fail for every file;
    /// that is an environment problem, not a per-file one.
    #[error("backend factory failure: {0}")]
    BackendFactory(#[from] crate::agent::BackendError),
}

/// One order per file with at least one error, largest error count first,
/// ties broken lexicographically by path.
pub fn partition_work(snapshot: &ErrorSnapshot, plan: &RunPlan) -> Vec<WorkOrder> {
    let mut orders: Vec<WorkOrder> = snapshot
        .by_file()
        .iter()
        .filter(|(_, diags)| !diags.is_empty())
        .map(|(path, diags)| WorkOrder {
            path: path.clone(),
            diagnostics: diags.clone(),
            max_turns: plan.max_turns,
            max_attempts: plan.max_attempts,
        })
        .collect();
    orders.sort_by(|a, b| {
        b.diagnostics.len().cmp(&a.diagnostics.len()).then_with(|| a.path.cmp(&b.path))
    });
    orders
}

/// Shared run facilities threaded through the pipeline stages.
struct RunHost<'a> {
    plan: &'a RunPlan,
    root: &'a Path,
    checker: &'a Checker,
    factory: &'a dyn BackendFactory,
    events: &'a EventLog,
    cancel: Option<&'a AtomicBool>,
    baselines: BTreeMap<String, Fingerprint>,
}

impl RunHost<'_> {
    fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }

    fn session_ctx(&self, round: u32) -> SessionContext<'_> {
        SessionContext {
            root: self.root,
            checker: self.checker,
            baselines: &self.baselines,
            hook_mode: self.plan.hook_mode,
            events: self.events,
            round,
            cancel: self.cancel,
            dry_run: self.plan.dry_run,
        }
    }

    fn create_backend(&self) -> Result<Box<dyn crate::agent::AgentBackend>, OrchestratorError> {
        Ok(self.factory.create()?)
    }

    fn snapshot(&self, stage: SnapshotStage) -> Result<ErrorSnapshot, OrchestratorError> {
        let snap = self.checker.run_check(&CheckScope::AllFiles)?;
        self.events.append(RunEvent::Snapshot {
            stage,
            total: snap.total,
            diagnostics: snap.errors().cloned().collect(),
        });
        Ok(snap)
    }

    fn cleanup(&self, snapshot: &ErrorSnapshot) -> Result<Vec<RemovedDirective>, OrchestratorError> {
        let removed = cleanup_unused(self.root, snapshot)?;
        for r in &removed {
            self.events.append(RunEvent::DirectiveRemoved {
                path: r.path.clone(),
                line: r.line,
                text: r.text.clone(),
                removed_by: RemovedBy::Cleanup,
            });
        }
        Ok(removed)
    }
}

/// Execute the full pipeline for `plan` against `root`.
///
/// The checker environment failing aborts with partial state already
/// persisted in the event log; a backend failure on a file is recorded and
/// the file is left for the verification rounds.
pub fn execute_run(
    plan: &RunPlan,
    root: &Path,
    checker: &Checker,
    factory: &dyn BackendFactory,
    events: &EventLog,
    cancel: Option<&AtomicBool>,
) -> Result<RunState, OrchestratorError> {
    if plan.phase != Phase::MinimalSetup {
        return Err(OrchestratorError::PhaseNotImplemented(plan.phase));
    }
    let started = clock::monotonic_now();
    let config = load_config_for(root, plan.phase)?;

    events.append(RunEvent::RunStarted {
        root: root.display().to_string(),
        phase: plan.phase,
        parallelism: plan.parallelism,
        hook_mode: plan.hook_mode.to_string(),
        backend: factory.label(),
        verification_rounds: plan.verification_rounds,
        dry_run: plan.dry_run,
    });

    let sources = discover_sources(root, &config)?;
    events.append(RunEvent::SourcesDiscovered {
        files: sources.records.len(),
        total_loc: sources.total_loc(),
        skipped: sources.skipped.clone(),
    });
    let host = RunHost {
        plan,
        root,
        checker,
        factory,
        events,
        cancel,
        baselines: sources.baselines(),
    };

    let initial_snapshot = host.snapshot(SnapshotStage::Initial)?;

    let missing_types = resolve_missing_types(
        &initial_snapshot.errors().cloned().collect::<Vec<_>>(),
        &plan.missing_decl_codes,
    );
    if !plan.dry_run {
        append_dev_dependencies(root, &missing_types.packages)?;
    }
    events.append(RunEvent::MissingTypes {
        packages: missing_types.packages.clone(),
        warnings: missing_types.warnings.clone(),
    });

    let orders = partition_work(&initial_snapshot, plan);
    events.append(RunEvent::WorkPlanned {
        orders: orders
            .iter()
            .map(|o| PlannedOrder { path: o.path.clone(), errors: o.diagnostics.len() })
            .collect(),
    });

    let mut state = RunState {
        initial_snapshot,
        missing_types,
        outcomes: Vec::new(),
        round_snapshots: Vec::new(),
        final_snapshot: None,
        removed_directives: Vec::new(),
        exit: RunExit::Success,
        interrupted: false,
        wall_ms: 0,
    };

    if plan.dry_run {
        // Preview: sequential sessions with writes disabled, then stop
        // before verification, cleanup, and the final snapshot.
        for order in &orders {
            let mut backend = host.create_backend()?;
            state.outcomes.push(run_session(order, backend.as_mut(), &host.session_ctx(0))?);
        }
        state.wall_ms = (clock::monotonic_now() - started).as_millis() as u64;
        events.append(RunEvent::RunFinished { exit_code: 0, wall_ms: state.wall_ms });
        return Ok(state);
    }

    // Initial parallel wave over disjoint files.
    let mut outcomes = run_wave(&host, orders)?;
    let current = host.snapshot(SnapshotStage::PostSessions)?;

    let (current, mut snapshot_is_fresh) =
        verification_rounds(&host, current, &mut outcomes, &mut state)?;

    // Final cleanup pass, then the snapshot the exit code is judged on.
    let removed = host.cleanup(&current)?;
    if !removed.is_empty() {
        state.removed_directives.extend(removed);
        snapshot_is_fresh = false;
    }
    let final_snapshot = if snapshot_is_fresh {
        current
    } else {
        host.checker.run_check(&CheckScope::AllFiles)?
    };
    events.append(RunEvent::Snapshot {
        stage: SnapshotStage::Final,
        total: final_snapshot.total,
        diagnostics: final_snapshot.errors().cloned().collect(),
    });

    // In reject mode the preservation guarantee is unconditional; audit it
    // after every run rather than trusting the hook path.
    if plan.hook_mode == HookMode::Reject {
        for (path, baseline) in &host.baselines {
            let abs = root.join(path);
            let text = std::fs::read_to_string(&abs).map_err(|e| SessionError::Io {
                path: path.clone(),
                source: e,
            })?;
            let current_fp = Fingerprint::compute(&text)
                .map_err(|_| OrchestratorError::BaselineViolation { path: path.clone() })?;
            if current_fp != *baseline {
                return Err(OrchestratorError::BaselineViolation { path: path.clone() });
            }
        }
    }

    state.interrupted = host.cancelled();
    if state.interrupted {
        events.append(RunEvent::RunInterrupted);
    }
    state.exit = if final_snapshot.is_clean() && !state.interrupted {
        RunExit::Success
    } else {
        RunExit::Unresolved
    };
    state.final_snapshot = Some(final_snapshot);
    outcomes.sort_by(|a, b| a.path.cmp(&b.path));
    state.outcomes = outcomes;
    state.wall_ms = (clock::monotonic_now() - started).as_millis() as u64;
    events.append(RunEvent::RunFinished {
        exit_code: state.exit.code(),
        wall_ms: state.wall_ms,
    });
    Ok(state)
}

/// Up to R sequential verification rounds: snapshot, stop when clean,
/// otherwise clean up unused directives and dispatch one session per
/// still-erroring file. Returns the latest snapshot and whether it is still
/// fresh (no edits after it).
fn verification_rounds(
    host: &RunHost<'_>,
    mut current: ErrorSnapshot,
    outcomes: &mut Vec<SessionOutcome>,
    state: &mut RunState,
) -> Result<(ErrorSnapshot, bool), OrchestratorError> {
    for round in 1..=host.plan.verification_rounds {
        if current.is_clean() || host.cancelled() {
            break;
        }
        let removed = host.cleanup(&current)?;
        // Errors left after subtracting the unused-directive diagnostics
        // whose lines were just removed.
        let mut files: Vec<(String, Vec<Diagnostic>)> = Vec::new();
        for (path, diags) in current.by_file() {
            let remaining: Vec<Diagnostic> = diags
                .iter()
                .filter(|d| {
                    !(d.code == UNUSED_DIRECTIVE_CODE
                        && removed.iter().any(|r| &r.path == path && r.line == d.line))
                })
                .cloned()
                .collect();
            if !remaining.is_empty() {
                files.push((path.clone(), remaining));
            }
        }
        state.removed_directives.extend(removed);

        if !files.is_empty() {
            host.events.append(RunEvent::RoundStarted {
                round,
                remaining_errors: files.iter().map(|(_, d)| d.len()).sum(),
                files: files.iter().map(|(p, _)| p.clone()).collect(),
            });
            for (path, diagnostics) in files {
                if host.cancelled() {
                    break;
                }
                let order = WorkOrder {
                    path,
                    diagnostics,
                    max_turns: host.plan.max_turns,
                    max_attempts: host.plan.max_attempts,
                };
                let mut backend = host.create_backend()?;
                outcomes.push(run_session(&order, backend.as_mut(), &host.session_ctx(round))?);
            }
        }

        current = host.snapshot(SnapshotStage::Round(round))?;
        state.round_snapshots.push(current.clone());
    }
    Ok((current, true))
}

fn load_config_for(root: &Path, phase: Phase) -> Result<CheckerConfig, OrchestratorError> {
    let path = root.join(workspace::CHECKER_CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        OrchestratorError::Workspace(WorkspaceError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })
    })?;
    let config = CheckerConfig::from_config_str(&text)?;
    let expected = CheckerConfig::for_phase(phase);
    let flags_match = config.allow_untyped_sources == expected.allow_untyped_sources
        && config.check_untyped_sources == expected.check_untyped_sources
        && config.suppress_emit == expected.suppress_emit
        && config.no_implicit_any == expected.no_implicit_any
        && config.strict == expected.strict;
    if !flags_match {
        return Err(OrchestratorError::ConfigMismatch { phase });
    }
    Ok(config)
}

/// Run the initial wave of sessions over a pool of `parallelism` workers.
/// File ownership is exclusive by construction: each path appears in exactly
/// one order and each order is delivered to exactly one worker.
fn run_wave(
    host: &RunHost<'_>,
    orders: Vec<WorkOrder>,
) -> Result<Vec<SessionOutcome>, OrchestratorError> {
    if orders.is_empty() {
        return Ok(Vec::new());
    }
    let workers = host.plan.parallelism.max(1).min(orders.len());
    let (order_tx, order_rx) = crossbeam_channel::unbounded::<WorkOrder>();
    for order in orders {
        order_tx.send(order).expect("queue open");
    }
    drop(order_tx);
    let (result_tx, result_rx) =
        crossbeam_channel::unbounded::<Result<SessionOutcome, OrchestratorError>>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let order_rx = order_rx.clone();
            let result_tx = result_tx.clone();
            scope.spawn(move || {
                while let Ok(order) = order_rx.recv() {
                    if host.cancelled() {
                        break;
                    }
                    let outcome = host.create_backend().and_then(|mut backend| {
                        run_session(&order, backend.as_mut(), &host.session_ctx(0))
                            .map_err(OrchestratorError::from)
                    });
                    if result_tx.send(outcome).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);
    });

    let mut outcomes = Vec::new();
    for res in result_rx.iter() {
        outcomes.push(res?);
    }
    Ok(outcomes)
}
