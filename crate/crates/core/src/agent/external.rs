//! External agent backend: a subprocess speaking newline-delimited JSON
//! frames over stdio.
//!
//! Orchestrator → backend:
//!
//! ```text
//! {"v":1,"type":"turn","session":"...","file":"...","content":"...",
//!  "diagnostics":[...],"last_verdict":{...}?}
//! {"v":1,"type":"tool","name":"read_file","result":{"content":"..."}}
//! {"v":1,"type":"tool","name":"edit_file","result":{"verdict":{...}}}
//! {"v":1,"type":"tool","name":"check_file","result":{"diagnostics":[...]}}
//! {"v":1,"type":"tool","name":"...","error":"..."}
//! ```
//!
//! Backend → orchestrator, one frame per request:
//!
//! ```text
//! {"v":1,"type":"tool","name":"read_file"|"edit_file"|"check_file"|"finish",
//!  "args":{...},"usage":{"in":N,"out":N}?}
//! ```
//!
//! Credentials reach the backend through inherited environment variables,
//! passed through opaquely.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::checker::Diagnostic;

use super::{
    AgentBackend, BackendError, BackendFactory, BackendReply, HookVerdict, ToolCall, ToolResult,
    TurnRequest, Usage,
};

pub const WIRE_VERSION: u32 = 1;

#[derive(Serialize)]
struct TurnFrame<'a> {
    v: u32,
    #[serde(rename = "type")]
    frame_type: &'static str,
    session: &'a str,
    file: &'a str,
    content: &'a str,
    diagnostics: &'a [Diagnostic],
    #[serde(skip_serializing_if = "Option::is_none")]
    last_verdict: Option<&'a HookVerdict>,
}

#[derive(Serialize)]
struct ResultFrame<'a> {
    v: u32,
    #[serde(rename = "type")]
    frame_type: &'static str,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Deserialize)]
struct ToolFrame {
    #[serde(default)]
    v: u32,
    #[serde(rename = "type")]
    frame_type: String,
    name: String,
    #[serde(default)]
    args: serde_json::Value,
    #[serde(default)]
    usage: Usage,
}

/// Spawned subprocess backend. One instance serves one session; the child
/// is killed when the backend is dropped.
pub struct ExternalBackend {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ExternalBackend {
    /// Spawn `command` through the shell. The per-turn `timeout` bounds how
    /// long we wait for each backend frame.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, BackendError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(BackendError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalBackend { child, stdin, lines: rx, timeout })
    }

    fn send_json(&mut self, frame: &impl Serialize) -> Result<(), BackendError> {
        let line = serde_json::to_string(frame).expect("frame serializes");
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()?;
        Ok(())
    }

    fn recv_reply(&mut self) -> Result<BackendReply, BackendError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(BackendError::Io(e)),
            Err(mpsc::RecvTimeoutError::Timeout) => return Err(BackendError::Timeout(self.timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => return Err(BackendError::ClosedStream),
        };
        let frame: ToolFrame = serde_json::from_str(&line)
            .map_err(|e| BackendError::Protocol(format!("malformed frame: {e}; got {line:?}")))?;
        if frame.v != WIRE_VERSION {
            return Err(BackendError::Protocol(format!("unsupported frame version {}", frame.v)));
        }
        if frame.frame_type != "tool" {
            return Err(BackendError::Protocol(format!(
                "expected a tool frame, got type {:?}",
                frame.frame_type
            )));
        }
        let call = match frame.name.as_str() {
            "read_file" => ToolCall::ReadFile,
            "check_file" => ToolCall::CheckFile,
            "finish" => ToolCall::Finish,
            "edit_file" => {
                let content = frame
                    .args
                    .get("content")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| {
                        BackendError::Protocol("edit_file frame lacks string args.content".into())
                    })?;
                ToolCall::EditFile { content: content.to_string() }
            }
            other => {
                return Err(BackendError::Protocol(format!("unknown tool {other:?}")));
            }
        };
        Ok(BackendReply { call, usage: frame.usage })
    }
}

impl AgentBackend for ExternalBackend {
    fn start(&mut self, req: &TurnRequest<'_>) -> Result<BackendReply, BackendError> {
        self.send_json(&TurnFrame {
            v: WIRE_VERSION,
            frame_type: "turn",
            session: req.session,
            file: req.file,
            content: req.content,
            diagnostics: req.diagnostics,
            last_verdict: req.last_verdict,
        })?;
        self.recv_reply()
    }

    fn next(&mut self, result: &ToolResult) -> Result<BackendReply, BackendError> {
        let (name, payload) = match result {
            ToolResult::ReadFile { content } => {
                ("read_file", serde_json::json!({ "content": content }))
            }
            ToolResult::EditFile { verdict } => (
                "edit_file",
                serde_json::json!({
                    "verdict": verdict,
                    "diff_lines": verdict
                        .diff
                        .as_ref()
                        .map(|d| d.render_lines())
                        .unwrap_or_default(),
                }),
            ),
            ToolResult::CheckFile { diagnostics } => {
                ("check_file", serde_json::json!({ "diagnostics": diagnostics }))
            }
        };
        self.send_json(&ResultFrame {
            v: WIRE_VERSION,
            frame_type: "tool",
            name,
            result: Some(payload),
            error: None,
        })?;
        self.recv_reply()
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Factory spawning one backend process per session.
pub struct ExternalFactory {
    pub command: String,
    pub turn_timeout: Duration,
}

impl BackendFactory for ExternalFactory {
    fn create(&self) -> Result<Box<dyn AgentBackend>, BackendError> {
        Ok(Box::new(ExternalBackend::spawn(&self.command, self.turn_timeout)?))
    }

    fn label(&self) -> String {
        format!("external:{}", self.command)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Severity;

    fn spawn_script(script: &str) -> ExternalBackend {
        ExternalBackend::spawn(script, Duration::from_secs(10)).unwrap()
    }

    fn turn_req<'a>(diags: &'a [Diagnostic]) -> TurnRequest<'a> {
        TurnRequest {
            session: "s1",
            file: "a.js",
            content: "let a = 1;\n",
            diagnostics: diags,
            last_verdict: None,
        }
    }

    #[test]
    fn read_then_finish_walkthrough() {
        let mut backend = spawn_script(
            r#"read turn; echo '{"v":1,"type":"tool","name":"read_file","args":{},"usage":{"in":7,"out":3}}'; read result; echo '{"v":1,"type":"tool","name":"finish","args":{}}'"#,
        );
        let reply = backend.start(&turn_req(&[])).unwrap();
        assert_eq!(reply.call, ToolCall::ReadFile);
        assert_eq!(reply.usage, Usage { input: 7, output: 3 });
        let reply = backend
            .next(&ToolResult::ReadFile { content: "let a = 1;\n".into() })
            .unwrap();
        assert_eq!(reply.call, ToolCall::Finish);
    }

    #[test]
    fn edit_frame_carries_content() {
        let mut backend = spawn_script(
            r#"read turn; printf '%s\n' '{"v":1,"type":"tool","name":"edit_file","args":{"content":"// c\nlet a = 1;\n"}}'"#,
        );
        let reply = backend.start(&turn_req(&[])).unwrap();
        match reply.call {
            ToolCall::EditFile { content } => assert!(content.starts_with("// c\n")),
            other => panic!("expected edit_file, got {other:?}"),
        }
    }

    #[test]
    fn malformed_frame_is_protocol_error() {
        let mut backend = spawn_script(r#"read turn; echo 'not json at all'"#);
        let err = backend.start(&turn_req(&[])).unwrap_err();
        assert!(matches!(err, BackendError::Protocol(_)));
    }

    #[test]
    fn closed_stream_is_detected() {
        let mut backend = spawn_script("exit 0");
        let err = backend.start(&turn_req(&[])).unwrap_err();
        assert!(matches!(err, BackendError::ClosedStream | BackendError::Io(_)));
    }

    #[test]
    fn rejected_verdict_is_mirrored_with_reason_and_diff() {
        use crate::agent::{HookVerdict, RejectReason};
        use crate::fingerprint::{fingerprint, token_diff};

        // The backend counts the rejection markers it sees in the mirrored
        // result frame and reports them back through the usage fields.
        let script = r#"read result; reasons=$(printf '%s' "$line$result" | grep -o 'behavior_change' | wc -l); edits=$(printf '%s' "$result" | grep -o '"edits"' | wc -l); printf '{"v":1,"type":"tool","name":"finish","args":{},"usage":{"in":%d,"out":%d}}\n' "$reasons" "$edits""#;
        let before = fingerprint("return a + b;").unwrap();
        let after = fingerprint("return a - b;").unwrap();
        let verdict = HookVerdict {
            accepted: false,
            reason: Some(RejectReason::BehaviorChange),
            diff: Some(token_diff(&before, &after)),
            detail: None,
        };
        let mut backend = spawn_script(script);
        let reply = backend.next(&ToolResult::EditFile { verdict }).unwrap();
        assert_eq!(reply.call, ToolCall::Finish);
        assert_eq!(reply.usage.input, 1, "reason must appear in the result frame");
        assert_eq!(reply.usage.output, 1, "token diff must appear in the result frame");
    }

    #[test]
    fn turn_frame_includes_diagnostics() {
        // The backend echoes the received line count of diagnostics back in
        // usage, proving the frame arrived intact.
        let script = r#"read line; n=$(printf '%s' "$line" | grep -o '"code"' | wc -l); printf '{"v":1,"type":"tool","name":"finish","args":{},"usage":{"in":%d,"out":0}}\n' "$n""#;
        let diags = vec![Diagnostic {
            path: "a.js".into(),
            line: 1,
            column: 1,
            code: "TS1000".into(),
            message: "msg".into(),
            severity: Severity::Error,
        }];
        let mut backend = spawn_script(script);
        let reply = backend.start(&turn_req(&diags)).unwrap();
        assert_eq!(reply.usage.input, 1);
    }
}
