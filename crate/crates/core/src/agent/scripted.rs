//! Deterministic offline backend: suppresses every fixable error line with a
//! classified directive, delegates missing-declaration diagnostics to the
//! types-package resolution step, and finishes. A pure function of the file
//! content, its diagnostics, and the classification map, so runs are
//! reproducible without any model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checker::{normalize_message, Diagnostic};
use crate::suppression::{insert_suppression, Suppression, SuppressionCategory, UNUSED_DIRECTIVE_CODE};
use crate::workspace;

use super::{
    AgentBackend, BackendError, BackendFactory, BackendReply, ToolCall, ToolResult, TurnRequest,
};

const EXPLANATION_LIMIT: usize = 120;

/// Diagnostic-code → category map. Codes not listed are valid patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationMap {
    bug_codes: BTreeSet<String>,
}

impl Default for ClassificationMap {
    /// Argument-count and nonexistent-property errors point at likely bugs;
    /// everything else defaults to a valid dynamic pattern.
    fn default() -> Self {
        ClassificationMap {
            bug_codes: ["TS2554", "TS2339"].into_iter().map(String::from).collect(),
        }
    }
}

impl ClassificationMap {
    pub fn from_bug_codes(codes: impl IntoIterator<Item = String>) -> Self {
        ClassificationMap { bug_codes: codes.into_iter().collect() }
    }

    /// Load from a JSON object of code → "bug" | "valid_pattern".
    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| format!("invalid classification map: {e}"))?;
        let mut bug_codes = BTreeSet::new();
        for (code, cat) in raw {
            match cat.as_str() {
                "bug" => {
                    bug_codes.insert(code);
                }
                "valid" | "valid_pattern" => {}
                other => {
                    return Err(format!(
                        "invalid classification {other:?} for {code} (expected bug or valid_pattern)"
                    ));
                }
            }
        }
        Ok(ClassificationMap { bug_codes })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read classification map {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// A line with any bug-classified code is a bug.
    pub fn classify(&self, codes: &[String]) -> SuppressionCategory {
        if codes.iter().any(|c| self.bug_codes.contains(c)) {
            SuppressionCategory::Bug
        } else {
            SuppressionCategory::ValidPattern
        }
    }
}

enum State {
    Fresh,
    AwaitingVerdict,
    Done,
}

pub struct ScriptedBackend {
    classification: ClassificationMap,
    /// Codes never suppressed: missing-declaration codes (delegated to
    /// types-package resolution) and the unused-directive code (cleanup's
    /// job).
    skip_codes: BTreeSet<String>,
    state: State,
}

impl ScriptedBackend {
    pub fn new(classification: ClassificationMap, missing_decl_codes: &[String]) -> Self {
        let mut skip_codes: BTreeSet<String> = missing_decl_codes.iter().cloned().collect();
        skip_codes.insert(UNUSED_DIRECTIVE_CODE.to_string());
        ScriptedBackend { classification, skip_codes, state: State::Fresh }
    }

    /// All suppressions for one file, bottom-to-top so earlier insertions
    /// never invalidate later line numbers. Returns the edited content, or
    /// `None` when nothing is suppressable.
    fn plan_edit(&self, content: &str, diagnostics: &[Diagnostic]) -> Option<String> {
        let mut by_line: BTreeMap<u32, Vec<&Diagnostic>> = BTreeMap::new();
        for d in diagnostics {
            if self.skip_codes.contains(&d.code) {
                continue;
            }
            by_line.entry(d.line).or_default().push(d);
        }
        if by_line.is_empty() {
            return None;
        }
        let mut edited = content.to_string();
        for (&line, diags) in by_line.iter().rev() {
            let mut codes: Vec<String> = diags.iter().map(|d| d.code.clone()).collect();
            codes.sort();
            codes.dedup();
            let suppression = Suppression {
                path: diags[0].path.clone(),
                anchor_line: line,
                category: self.classification.classify(&codes),
                explanation: explanation_for(diags),
                suppressed_codes: codes,
            };
            match insert_suppression(&edited, line, &suppression) {
                Ok(next) => edited = next,
                // Out-of-range or already-governed lines are stale
                // diagnostics; leave them for the next verification pass.
                Err(_) => continue,
            }
        }
        if edited == content {
            None
        } else {
            Some(edited)
        }
    }
}

/// One-line explanation templated from the first diagnostic on the line.
fn explanation_for(diags: &[&Diagnostic]) -> String {
    let first = diags
        .iter()
        .min_by_key(|d| (d.column, &d.code))
        .expect("line groups are non-empty");
    let headline = normalize_message(first.message.lines().next().unwrap_or(""));
    let mut text = format!("{}: {}", first.code, headline);
    if text.chars().count() > EXPLANATION_LIMIT {
        text = text.chars().take(EXPLANATION_LIMIT).collect::<String>() + "...";
    }
    if diags.len() > 1 {
        text.push_str(&format!(" (+{} more on this line)", diags.len() - 1));
    }
    text
}

impl AgentBackend for ScriptedBackend {
    fn start(&mut self, req: &TurnRequest<'_>) -> Result<BackendReply, BackendError> {
        match self.plan_edit(req.content, req.diagnostics) {
            Some(content) => {
                self.state = State::AwaitingVerdict;
                Ok(BackendReply::unmetered(ToolCall::EditFile { content }))
            }
            None => {
                self.state = State::Done;
                Ok(BackendReply::unmetered(ToolCall::Finish))
            }
        }
    }

    fn next(&mut self, result: &ToolResult) -> Result<BackendReply, BackendError> {
        match (&self.state, result) {
            (State::AwaitingVerdict, ToolResult::EditFile { verdict }) => {
                if !verdict.accepted {
                    // Scripted edits are comment-only by construction; a
                    // rejection means something upstream is broken.
                    return Err(BackendError::Protocol(format!(
                        "comment-only suppression edit rejected: {:?}",
                        verdict.reason
                    )));
                }
                self.state = State::Done;
                Ok(BackendReply::unmetered(ToolCall::Finish))
            }
            _ => Err(BackendError::Protocol("unexpected tool result for scripted state".into())),
        }
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// Factory for the scripted policy with a fixed classification map.
pub struct ScriptedFactory {
    pub classification: ClassificationMap,
    pub missing_decl_codes: Vec<String>,
}

impl Default for ScriptedFactory {
    fn default() -> Self {
        ScriptedFactory {
            classification: ClassificationMap::default(),
            missing_decl_codes: workspace::default_missing_decl_codes(),
        }
    }
}

impl BackendFactory for ScriptedFactory {
    fn create(&self) -> Result<Box<dyn AgentBackend>, BackendError> {
        Ok(Box::new(ScriptedBackend::new(
            self.classification.clone(),
            &self.missing_decl_codes,
        )))
    }

    fn label(&self) -> String {
        "scripted".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Severity;

    fn diag(line: u32, column: u32, code: &str, msg: &str) -> Diagnostic {
        Diagnostic {
            path: "a.js".into(),
            line,
            column,
            code: code.into(),
            message: msg.into(),
            severity: Severity::Error,
        }
    }

    fn backend() -> ScriptedBackend {
        ScriptedBackend::new(ClassificationMap::default(), &workspace::default_missing_decl_codes())
    }

    #[test]
    fn suppresses_bottom_to_top() {
        let content = "l1();\nl2();\nl3();\nl4();\nl5();\nl6();\nl7();\nl8();\nl9();\n";
        let diags =
            vec![diag(5, 1, "TS2304", "Cannot find name 'x'."), diag(9, 1, "TS2304", "Cannot find name 'y'.")];
        let edited = backend().plan_edit(content, &diags).unwrap();
        let lines: Vec<&str> = edited.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines[4].contains("[agentic-typer:valid]"));
        assert_eq!(lines[5], "l5();");
        assert!(lines[9].contains("[agentic-typer:valid]"));
        assert_eq!(lines[10], "l9();");
    }

    #[test]
    fn bug_codes_are_tagged_bug() {
        let content = "f(1, 2, 3);\n";
        let diags = vec![diag(1, 1, "TS2554", "Expected 2 arguments, but got 3.")];
        let edited = backend().plan_edit(content, &diags).unwrap();
        assert!(edited.starts_with("// @ts-expect-error -- [agentic-typer:bug] TS2554:"));
    }

    #[test]
    fn one_directive_covers_all_codes_on_a_line() {
        let content = "weird(1).nope;\n";
        let diags = vec![
            diag(1, 1, "TS2345", "Argument of type 'number' is not assignable."),
            diag(1, 10, "TS2339", "Property 'nope' does not exist."),
        ];
        let edited = backend().plan_edit(content, &diags).unwrap();
        let lines: Vec<&str> = edited.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("(+1 more on this line)"));
        // Any bug code on the line classifies the whole directive as bug.
        assert!(lines[0].contains("[agentic-typer:bug]"));
    }

    #[test]
    fn missing_declaration_codes_are_not_suppressed() {
        let content = "import x from 'nope';\ny();\n";
        let diags = vec![
            diag(1, 15, "TS2307", "Cannot find module 'nope' or its corresponding type declarations."),
            diag(2, 1, "TS2349", "This expression is not callable."),
        ];
        let edited = backend().plan_edit(content, &diags).unwrap();
        let lines: Vec<&str> = edited.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "import x from 'nope';");
        assert!(lines[1].contains("[agentic-typer:valid] TS2349:"));
    }

    #[test]
    fn nothing_suppressable_finishes_immediately() {
        assert!(backend().plan_edit("ok();\n", &[]).is_none());
        let only_missing =
            vec![diag(1, 1, "TS2307", "Cannot find module 'x' or its corresponding type declarations.")];
        assert!(backend().plan_edit("import 'x';\n", &only_missing).is_none());
    }

    #[test]
    fn identical_input_gives_identical_output() {
        let content = "a();\nb();\n";
        let diags = vec![diag(1, 1, "TS2304", "Cannot find name 'a'."), diag(2, 1, "TS2304", "Cannot find name 'b'.")];
        let one = backend().plan_edit(content, &diags).unwrap();
        let two = backend().plan_edit(content, &diags).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn long_messages_are_truncated_single_line() {
        let long = "Type 'X' is not assignable. ".repeat(30);
        let diags = vec![diag(1, 1, "TS2322", &long)];
        let edited = backend().plan_edit("x;\n", &diags).unwrap();
        let first = edited.lines().next().unwrap();
        assert!(first.len() < 200);
        assert!(!first.contains('\n'));
    }

    #[test]
    fn multi_line_message_uses_first_line_only() {
        let msg = "This expression is not callable.\n  Type 'Number' has no call signatures.";
        let diags = vec![diag(1, 1, "TS2349", msg)];
        let edited = backend().plan_edit("y();\n", &diags).unwrap();
        assert!(edited
            .starts_with("// @ts-expect-error -- [agentic-typer:valid] TS2349: This expression is not callable."));
    }

    #[test]
    fn classification_map_parses_from_json() {
        let map = ClassificationMap::from_json(
            r#"{"TS2554": "bug", "TS2362": "valid_pattern", "TS9999": "bug"}"#,
        )
        .unwrap();
        assert_eq!(map.classify(&["TS9999".into()]), SuppressionCategory::Bug);
        assert_eq!(map.classify(&["TS2362".into()]), SuppressionCategory::ValidPattern);
        assert!(ClassificationMap::from_json(r#"{"TS1": "nope"}"#).is_err());
    }
}
