//! Reference external backend: the scripted suppress-and-classify policy
//! spoken over the stdio wire protocol, for protocol conformance testing and
//! as a starting point for real backend implementations.
//!
//! Reads orchestrator frames from stdin (one JSON object per line) and
//! writes one tool frame per request to stdout. Serves a single session;
//! exits on end of input.

use std::io::{BufRead, Write};

use agentic_typer_core::agent::{
    AgentBackend, ClassificationMap, HookVerdict, ScriptedBackend, ToolCall, ToolResult,
    TurnRequest,
};
use agentic_typer_core::checker::Diagnostic;
use agentic_typer_core::workspace::default_missing_decl_codes;

fn main() {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut backend =
        ScriptedBackend::new(ClassificationMap::default(), &default_missing_decl_codes());

    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let frame: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("ref-backend: malformed frame: {e}");
                std::process::exit(1);
            }
        };
        let reply = match frame.get("type").and_then(|t| t.as_str()) {
            Some("turn") => {
                let session = frame.get("session").and_then(|v| v.as_str()).unwrap_or("");
                let file = frame.get("file").and_then(|v| v.as_str()).unwrap_or("");
                let content = frame.get("content").and_then(|v| v.as_str()).unwrap_or("");
                let diagnostics: Vec<Diagnostic> = frame
                    .get("diagnostics")
                    .map(|v| serde_json::from_value(v.clone()).unwrap_or_default())
                    .unwrap_or_default();
                let last_verdict: Option<HookVerdict> = frame
                    .get("last_verdict")
                    .filter(|v| !v.is_null())
                    .and_then(|v| serde_json::from_value(v.clone()).ok());
                backend.start(&TurnRequest {
                    session,
                    file,
                    content,
                    diagnostics: &diagnostics,
                    last_verdict: last_verdict.as_ref(),
                })
            }
            Some("tool") => {
                let name = frame.get("name").and_then(|v| v.as_str()).unwrap_or("");
                let result = frame.get("result").cloned().unwrap_or(serde_json::Value::Null);
                let tool_result = match name {
                    "read_file" => ToolResult::ReadFile {
                        content: result
                            .get("content")
                            .and_then(|v| v.as_str())
                            .unwrap_or("")
                            .to_string(),
                    },
                    "edit_file" => {
                        let verdict: HookVerdict = result
                            .get("verdict")
                            .and_then(|v| serde_json::from_value(v.clone()).ok())
                            .unwrap_or(HookVerdict {
                                accepted: false,
                                reason: None,
                                diff: None,
                                detail: Some("missing verdict in result frame".into()),
                            });
                        ToolResult::EditFile { verdict }
                    }
                    "check_file" => ToolResult::CheckFile {
                        diagnostics: result
                            .get("diagnostics")
                            .map(|v| serde_json::from_value(v.clone()).unwrap_or_default())
                            .unwrap_or_default(),
                    },
                    other => {
                        eprintln!("ref-backend: unexpected tool result {other:?}");
                        std::process::exit(1);
                    }
                };
                backend.next(&tool_result)
            }
            other => {
                eprintln!("ref-backend: unexpected frame type {other:?}");
                std::process::exit(1);
            }
        };
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                eprintln!("ref-backend: {e}");
                std::process::exit(1);
            }
        };
        let args = match &reply.call {
            ToolCall::EditFile { content } => serde_json::json!({ "content": content }),
            _ => serde_json::json!({}),
        };
        let frame = serde_json::json!({
            "v": 1,
            "type": "tool",
            "name": reply.call.name(),
            "args": args,
        });
        writeln!(out, "{frame}").expect("stdout closed");
        out.flush().expect("stdout closed");
    }
}
