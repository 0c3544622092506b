//! Command-line front end: `init`, `run`, `diff`, and `report`.

mod config;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use agentic_typer_core::agent::{BackendFactory, ExternalFactory, ScriptedFactory};
use agentic_typer_core::checker::{CheckScope, Checker};
use agentic_typer_core::events::{read_events, EventLog};
use agentic_typer_core::fingerprint::{fingerprint, token_diff};
use agentic_typer_core::orchestrator::{execute_run, OrchestratorError, RunPlan};
use agentic_typer_core::report::{build_report, emit_json, load_baseline, render_table};
use agentic_typer_core::suppression::SuppressionCategory;
use agentic_typer_core::workspace::{self, resolve_missing_types, scaffold_config};

use config::{BackendChoice, EffectiveConfig, GlobalArgs};

/// Retrofit type checking onto a legacy JavaScript repository: set up the
/// checker, dispatch error-fixing agent sessions with a behavior
/// preservation hook, insert classified suppression directives where errors
/// cannot be fixed, and report the results.
#[derive(Parser)]
#[command(name = "agentic-typer", version)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the checker config for the phase and report the initial error
    /// count plus missing type-declaration packages.
    Init {
        /// Replace an existing config with stricter flags.
        #[arg(long)]
        overwrite: bool,
    },
    /// Execute a full run: snapshot, agent sessions, verification rounds,
    /// cleanup, report.
    Run,
    /// Compare two files by canonical token stream (exit 0 equivalent,
    /// 1 differing, 2 lexical/read error).
    Diff { file_a: PathBuf, file_b: PathBuf },
    /// Rebuild the report from a stored event log without re-running.
    Report {
        /// Event log path (default: the configured log output).
        log: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match EffectiveConfig::resolve(&cli.globals) {
        Ok(cfg) => match cli.command {
            Command::Init { overwrite } => cmd_init(&cfg, overwrite),
            Command::Run => cmd_run(&cfg),
            Command::Diff { file_a, file_b } => cmd_diff(&file_a, &file_b),
            Command::Report { log } => cmd_report(&cfg, log),
        },
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    };
    std::process::exit(code);
}

fn resolve_checker(cfg: &EffectiveConfig) -> Result<Checker, i32> {
    Checker::resolve(&cfg.root, cfg.checker.as_deref()).map_err(|e| {
        eprintln!("error: {e}");
        2
    })
}

fn cmd_init(cfg: &EffectiveConfig, overwrite: bool) -> i32 {
    if cfg.dry_run {
        let config = workspace::CheckerConfig::for_phase(cfg.phase);
        println!(
            "dry run: would write {} for phase {}:",
            workspace::CHECKER_CONFIG_FILE,
            cfg.phase
        );
        print!("{}", config.to_config_string());
        return 0;
    }
    if let Err(e) = scaffold_config(&cfg.root, cfg.phase, overwrite) {
        eprintln!("error: {e}");
        return 2;
    }
    println!("wrote {} for phase {}", workspace::CHECKER_CONFIG_FILE, cfg.phase);

    let checker = match resolve_checker(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let snapshot = match checker.run_check(&CheckScope::AllFiles) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    println!(
        "initial check: {} errors in {} files",
        snapshot.total,
        snapshot.by_file().len()
    );

    let diags: Vec<_> = snapshot.errors().cloned().collect();
    let missing = resolve_missing_types(&diags, &workspace::default_missing_decl_codes());
    print_missing_types(&missing.packages, &missing.warnings);
    0
}

fn print_missing_types(
    packages: &[workspace::TypesPackage],
    warnings: &[String],
) {
    if !packages.is_empty() {
        println!("missing type declarations; install with your package tool:");
        let names: Vec<&str> = packages.iter().map(|p| p.package.as_str()).collect();
        println!("  npm install --save-dev {}", names.join(" "));
    }
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn build_factory(cfg: &EffectiveConfig) -> Box<dyn BackendFactory> {
    match &cfg.backend {
        BackendChoice::Scripted => Box::new(ScriptedFactory {
            classification: cfg.classification.clone(),
            missing_decl_codes: workspace::default_missing_decl_codes(),
        }),
        BackendChoice::External(command) => Box::new(ExternalFactory {
            command: command.clone(),
            turn_timeout: cfg.turn_timeout,
        }),
    }
}

fn cmd_run(cfg: &EffectiveConfig) -> i32 {
    let checker = match resolve_checker(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let events = match EventLog::to_file(&cfg.log_out) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let plan = RunPlan {
        phase: cfg.phase,
        parallelism: cfg.parallelism,
        hook_mode: cfg.hook_mode,
        verification_rounds: cfg.verification_rounds,
        classification: cfg.classification.clone(),
        missing_decl_codes: workspace::default_missing_decl_codes(),
        max_turns: cfg.max_turns,
        max_attempts: cfg.max_attempts,
        dry_run: cfg.dry_run,
    };
    let factory = build_factory(cfg);

    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = cancel.clone();
        let _ = ctrlc::set_handler(move || cancel.store(true, Ordering::Relaxed));
    }

    let state = match execute_run(&plan, &cfg.root, &checker, factory.as_ref(), &events, Some(&cancel))
    {
        Ok(state) => state,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                // Environment, configuration, and internal-audit failures.
                OrchestratorError::Checker(_)
                | OrchestratorError::Workspace(_)
                | OrchestratorError::Suppression(_)
                | OrchestratorError::Session(_)
                | OrchestratorError::ConfigMismatch { .. }
                | OrchestratorError::PhaseNotImplemented(_)
                | OrchestratorError::BaselineViolation { .. }
                | OrchestratorError::BackendFactory(_) => 2,
            };
        }
    };

    if cfg.dry_run {
        println!("dry run: intended edits (nothing written)");
        for outcome in &state.outcomes {
            if outcome.suppressions_added.is_empty() {
                continue;
            }
            println!("{}:", outcome.path);
            for s in &outcome.suppressions_added {
                println!(
                    "  would suppress [{}] above line {} ({}): {}",
                    s.suppressed_codes.join(","),
                    s.anchor_line,
                    match s.category {
                        SuppressionCategory::Bug => "bug",
                        SuppressionCategory::ValidPattern => "valid",
                    },
                    s.explanation
                );
            }
        }
        print_missing_types(&state.missing_types.packages, &state.missing_types.warnings);
        return 0;
    }

    print_missing_types(&state.missing_types.packages, &state.missing_types.warnings);
    if state.interrupted {
        eprintln!("interrupted: run is incomplete");
    }

    if let Err(code) = emit_outputs(cfg, &cfg.log_out) {
        return code;
    }
    state.exit.code()
}

/// Build the report from the stored log, print the table, write the JSON.
fn emit_outputs(cfg: &EffectiveConfig, log_path: &Path) -> Result<(), i32> {
    let records = read_events(log_path).map_err(|e| {
        eprintln!("error: {e}");
        2
    })?;
    let baseline = match &cfg.baseline {
        Some(path) => Some(load_baseline(path).map_err(|e| {
            eprintln!("error: {e}");
            2
        })?),
        None => None,
    };
    let report = build_report(&records, &cfg.repo_label, baseline.as_deref(), &cfg.price)
        .map_err(|e| {
            eprintln!("error: {e}");
            2
        })?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    if !report.bug_review.is_empty() {
        println!("\nsuppressions marked for human review:");
        for entry in &report.bug_review {
            println!("  {}:{}  {}", entry.path, entry.anchor_line, entry.explanation);
        }
    }
    if let Some(parent) = cfg.json_out.parent() {
        if !parent.as_os_str().is_empty() {
            let _ = std::fs::create_dir_all(parent);
        }
    }
    std::fs::write(&cfg.json_out, emit_json(&report)).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", cfg.json_out.display());
        2
    })?;
    println!("\nreport: {}", cfg.json_out.display());
    println!("event log: {}", log_path.display());
    Ok(())
}

fn cmd_diff(file_a: &Path, file_b: &Path) -> i32 {
    let read = |p: &Path| -> Result<String, i32> {
        std::fs::read_to_string(p).map_err(|e| {
            eprintln!("error: cannot read {}: {e}", p.display());
            2
        })
    };
    let (text_a, text_b) = match (read(file_a), read(file_b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    let fp = |p: &Path, text: &str| {
        fingerprint(text).map_err(|e| {
            eprintln!("error: {}: {e}", p.display());
            2
        })
    };
    let (a, b) = match (fp(file_a, &text_a), fp(file_b, &text_b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    if a == b {
        println!("equivalent: token streams match ({})", a.hash_hex());
        return 0;
    }
    let diff = token_diff(&a, &b);
    for line in diff.render_lines() {
        println!("{line}");
    }
    1
}

fn cmd_report(cfg: &EffectiveConfig, log: Option<PathBuf>) -> i32 {
    let log_path = log.unwrap_or_else(|| cfg.log_out.clone());
    match emit_outputs(cfg, &log_path) {
        Ok(()) => 0,
        Err(code) => code,
    }
}
