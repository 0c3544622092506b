//! Command-level integration tests: exit-code contracts, the diff and
//! report commands, dry runs, the unresolved-errors path, and wire-protocol
//! parity between the scripted backend and the reference external backend.

mod common;

use common::*;

#[test]
fn init_on_clean_repo_reports_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[("src/ok.js".to_string(), "/** @type {number} */\nconst n = 1;\nexport { n };\n".to_string())],
    );
    let (code, out, _) = run_cli(dir.path(), &["init"]);
    assert_eq!(code, 0);
    assert!(out.contains("initial check: 0 errors"), "{out}");
}

#[test]
fn init_with_missing_checker_exits_2_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &[("src/a.js".to_string(), "const a = 1;\n".to_string())]);
    let (code, _, err) = run_cli(dir.path(), &["init", "--checker", "/nonexistent/tsc"]);
    assert_eq!(code, 2);
    assert!(err.contains("error:"), "{err}");
}

#[test]
fn init_refuses_downgrade_without_overwrite_flag() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &[("src/a.js".to_string(), "const a = 1;\n".to_string())]);
    let (code, _, _) = run_cli(dir.path(), &["init", "--phase", "strict-mode"]);
    assert_eq!(code, 0);
    let (code, _, err) = run_cli(dir.path(), &["init", "--phase", "minimal-setup"]);
    assert_eq!(code, 2, "downgrade must refuse: {err}");
    let (code, _, _) = run_cli(dir.path(), &["init", "--phase", "minimal-setup", "--overwrite"]);
    assert_eq!(code, 0);
}

#[test]
fn run_without_init_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &[("src/a.js".to_string(), "const a = 1;\n".to_string())]);
    let (code, _, err) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 2);
    assert!(err.contains("error:"), "{err}");
}

#[test]
fn unimplemented_phase_stops_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &[("src/a.js".to_string(), "const a = 1;\n".to_string())]);
    let (code, _, _) = run_cli(dir.path(), &["init", "--phase", "full-coverage"]);
    assert_eq!(code, 0);
    let (code, _, err) = run_cli(dir.path(), &["run", "--phase", "full-coverage"]);
    assert_eq!(code, 2);
    assert!(err.contains("config-scaffolding only"), "{err}");
}

#[test]
fn withheld_types_package_leaves_unresolved_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &withheld_types_fixture());
    let (code, _, _) = run_cli(dir.path(), &["init"]);
    assert_eq!(code, 0);
    let (code, out, _) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 1, "missing declarations cannot resolve: {out}");
    assert!(out.contains("@types/left-pad"), "install instruction expected: {out}");

    // The manifest gained the dev dependency but nothing was installed.
    let manifest: serde_json::Value =
        serde_json::from_str(&read_rel(dir.path(), "package.json")).unwrap();
    assert_eq!(manifest["devDependencies"]["@types/left-pad"], "*");
    assert!(!dir.path().join("node_modules").exists());

    // The suppressable error was still handled; only the delegated one remains.
    let report: serde_json::Value =
        serde_json::from_str(&read_rel(dir.path(), ".agentic-typer/report.json")).unwrap();
    assert_eq!(report["unresolved"], 1);
    assert_eq!(report["suppressions_total"], 1);
    assert_eq!(report["exit_code"], 1);
}

#[test]
fn one_directive_silences_two_diagnostics_on_a_line() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[(
            "src/pair.js".to_string(),
            "/** @param {string} s */\nfunction pair(s) { return s; }\nexport const out = pair(42).missing;\n"
                .to_string(),
        )],
    );
    let (code, out, _) = run_cli(dir.path(), &["init"]);
    assert_eq!(code, 0);
    assert!(out.contains("initial check: 2 errors"), "{out}");
    let (code, _, _) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 0);

    let content = read_rel(dir.path(), "src/pair.js");
    assert_eq!(content.matches("@ts-expect-error").count(), 1, "{content}");
    let report: serde_json::Value =
        serde_json::from_str(&read_rel(dir.path(), ".agentic-typer/report.json")).unwrap();
    assert_eq!(report["per_file"][0]["initial_errors"], 2);
    assert_eq!(report["per_file"][0]["suppressions"], 1);
    assert_eq!(report["errors_suppressed"], 2);
    let codes = report["suppressions"][0]["codes"].as_array().unwrap();
    assert_eq!(codes.len(), 2, "both codes recorded on the one directive");
}

#[test]
fn rerun_on_processed_repo_adds_nothing() {
    let corpus = corpus_alpha();
    let dir = tempfile::tempdir().unwrap();
    corpus.materialize(dir.path());
    run_cli(dir.path(), &["init"]);
    let (code, _, _) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 0);
    let processed = snapshot_tree(dir.path());

    let (code, _, _) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 0, "rerun must also succeed");
    let report: serde_json::Value =
        serde_json::from_str(&read_rel(dir.path(), ".agentic-typer/report.json")).unwrap();
    assert_eq!(report["initial_errors"], 0);
    assert_eq!(report["suppressions_total"], 0, "all errors were already suppressed");
    assert_eq!(snapshot_tree(dir.path()), processed, "rerun must not edit anything");
}

#[test]
fn dry_run_previews_without_writing() {
    let corpus = corpus_alpha();
    let dir = tempfile::tempdir().unwrap();
    corpus.materialize(dir.path());
    let before = snapshot_tree(dir.path());
    let (code, _, _) = run_cli(dir.path(), &["init"]);
    assert_eq!(code, 0);
    let before_config = snapshot_tree(dir.path());
    let (code, out, _) = run_cli(dir.path(), &["run", "--dry-run"]);
    assert_eq!(code, 0);
    assert!(out.contains("dry run: intended edits"), "{out}");
    assert!(out.contains("would suppress ["), "{out}");
    let after = snapshot_tree(dir.path());
    assert_eq!(before_config, after, "dry run must not touch the tree");
    drop(before);
}

#[test]
fn diff_command_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[
            ("a.js".to_string(), "let x = 1; // one\n".to_string()),
            ("b.js".to_string(), "// two\nlet x = 1;\n".to_string()),
            ("c.js".to_string(), "let x = 2;\n".to_string()),
            ("broken.js".to_string(), "let s = 'open;\n".to_string()),
        ],
    );
    let path = |n: &str| dir.path().join(n).to_string_lossy().into_owned();

    let (code, out, _) = run_cli(dir.path(), &["diff", &path("a.js"), &path("a.js")]);
    assert_eq!(code, 0);
    assert!(out.contains("equivalent"), "{out}");

    // Comment-only difference is equivalence.
    let (code, _, _) = run_cli(dir.path(), &["diff", &path("a.js"), &path("b.js")]);
    assert_eq!(code, 0);

    // One-token change: exit 1 and exactly one diff line.
    let (code, out, _) = run_cli(dir.path(), &["diff", &path("a.js"), &path("c.js")]);
    assert_eq!(code, 1);
    let diff_lines: Vec<&str> = out.lines().collect();
    assert_eq!(diff_lines.len(), 1, "{out}");
    assert!(diff_lines[0].starts_with("line 1: replace"), "{out}");

    // Lexical error and unreadable input both exit 2.
    let (code, _, err) = run_cli(dir.path(), &["diff", &path("a.js"), &path("broken.js")]);
    assert_eq!(code, 2);
    assert!(err.contains("unterminated string"), "{err}");
    let (code, _, _) = run_cli(dir.path(), &["diff", &path("a.js"), &path("missing.js")]);
    assert_eq!(code, 2);
}

#[test]
fn report_command_rebuilds_identically_from_stored_log() {
    let corpus = corpus_alpha();
    let dir = tempfile::tempdir().unwrap();
    corpus.materialize(dir.path());
    run_cli(dir.path(), &["init"]);
    let (code, first_table, _) = run_cli(dir.path(), &["run"]);
    assert_eq!(code, 0);
    let first_json = read_rel(dir.path(), ".agentic-typer/report.json");

    let (code, second_table, _) = run_cli(dir.path(), &["report"]);
    assert_eq!(code, 0);
    let second_json = read_rel(dir.path(), ".agentic-typer/report.json");
    assert_eq!(first_json, second_json, "report must be a pure function of the log");
    // The table portion of run output ends with the report/location lines;
    // the rebuilt table must appear verbatim in both.
    let table_head = second_table.lines().next().unwrap();
    assert!(first_table.contains(table_head));

    let (code, _, err) = run_cli(dir.path(), &["report", "missing.jsonl"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn corrupt_event_log_is_refused_with_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), &[("log.jsonl".to_string(), "({not json)\n".to_string())]);
    let log = dir.path().join("log.jsonl");
    let (code, _, err) = run_cli(dir.path(), &["report", log.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
    assert!(err.contains("({not json)"), "{err}");
}

#[test]
fn external_reference_backend_matches_scripted_results() {
    let corpus = corpus_alpha();
    let scripted_dir = tempfile::tempdir().unwrap();
    let external_dir = tempfile::tempdir().unwrap();
    corpus.materialize(scripted_dir.path());
    corpus.materialize(external_dir.path());

    run_cli(scripted_dir.path(), &["init"]);
    let (code, _, _) = run_cli(scripted_dir.path(), &["run", "--backend", "scripted"]);
    assert_eq!(code, 0);

    run_cli(external_dir.path(), &["init"]);
    let backend_arg = format!("external:{REF_BACKEND_BIN}");
    let (code, _, err) = run_cli(external_dir.path(), &["run", "--backend", &backend_arg]);
    assert_eq!(code, 0, "external backend run failed: {err}");

    assert_eq!(
        snapshot_tree(scripted_dir.path()),
        snapshot_tree(external_dir.path()),
        "the wire protocol must reproduce the scripted policy byte for byte"
    );
}

#[test]
fn alert_mode_admits_code_edits_and_reports_the_diff() {
    // In alert mode a token-changing edit is written and the verdict keeps
    // the diff; end state is checked through the event log.
    use agentic_typer_core::agent::{
        AgentBackend, BackendError, BackendFactory, BackendReply, ToolCall, ToolResult,
        TurnRequest,
    };
    use agentic_typer_core::checker::Checker;
    use agentic_typer_core::events::{EventLog, RunEvent};
    use agentic_typer_core::orchestrator::{execute_run, RunPlan};
    use agentic_typer_core::workspace::{scaffold_config, Phase};

    struct Tamperer;
    impl AgentBackend for Tamperer {
        fn start(&mut self, req: &TurnRequest<'_>) -> Result<BackendReply, BackendError> {
            let patched = req.content.replace("\"not a number\"", "42");
            Ok(BackendReply::unmetered(ToolCall::EditFile { content: patched }))
        }
        fn next(&mut self, result: &ToolResult) -> Result<BackendReply, BackendError> {
            match result {
                ToolResult::EditFile { verdict } if verdict.accepted => {
                    Ok(BackendReply::unmetered(ToolCall::Finish))
                }
                other => Err(BackendError::Protocol(format!("unexpected {other:?}"))),
            }
        }
        fn deterministic(&self) -> bool {
            true
        }
    }
    struct TampererFactory;
    impl BackendFactory for TampererFactory {
        fn create(&self) -> Result<Box<dyn AgentBackend>, BackendError> {
            Ok(Box::new(Tamperer))
        }
        fn label(&self) -> String {
            "tamperer".into()
        }
    }

    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[(
            "src/a.js".to_string(),
            "/** @type {number} */\nlet n = \"not a number\";\nexport { n };\n".to_string(),
        )],
    );
    scaffold_config(dir.path(), Phase::MinimalSetup, false).unwrap();
    let checker = Checker::resolve(dir.path(), None).unwrap();
    let events = EventLog::in_memory();
    let plan = RunPlan {
        hook_mode: "alert".parse().unwrap(),
        ..RunPlan::default()
    };
    let state =
        execute_run(&plan, dir.path(), &checker, &TampererFactory, &events, None).unwrap();

    // The behavioral edit went through (alert mode) and actually fixed the
    // error, so the run is clean, and the verdict carried a non-empty diff.
    assert_eq!(state.final_snapshot.as_ref().unwrap().total, 0);
    assert!(read_rel(dir.path(), "src/a.js").contains("let n = 42;"));
    let alerted = events.records().iter().any(|r| {
        matches!(
            &r.event,
            RunEvent::HookVerdict { accepted: true, edits, .. } if *edits > 0
        )
    });
    assert!(alerted, "alert-mode verdict with a diff expected");
}
