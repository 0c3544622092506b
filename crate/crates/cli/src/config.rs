//! Effective CLI configuration: command-line flags override the project
//! config file, which overrides built-in defaults; exactly that precedence.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use agentic_typer_core::agent::{ClassificationMap, HookMode};
use agentic_typer_core::report::PriceSheet;
use agentic_typer_core::workspace::Phase;

/// Project config file at the repository root, so reruns are reproducible
/// from the repo alone.
pub const PROJECT_CONFIG_FILE: &str = "agentic-typer.json";

/// Optional per-project defaults. Relative paths resolve against the root.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFileConfig {
    pub phase: Option<String>,
    pub parallelism: Option<usize>,
    pub backend: Option<String>,
    pub hook_mode: Option<String>,
    pub verification_rounds: Option<u32>,
    pub baseline: Option<PathBuf>,
    pub price_in: Option<f64>,
    pub price_out: Option<f64>,
    pub json_out: Option<PathBuf>,
    pub log_out: Option<PathBuf>,
    pub checker: Option<PathBuf>,
    pub classification_map: Option<PathBuf>,
    pub max_turns: Option<u32>,
    pub max_attempts: Option<u32>,
    pub repo_label: Option<String>,
    pub turn_timeout_secs: Option<u64>,
}

/// Flag values as given on the command line (None = not passed).
#[derive(Debug, Default, clap::Args)]
pub struct GlobalArgs {
    /// Repository root to operate on.
    #[arg(long, global = true, default_value = ".")]
    pub root: PathBuf,

    /// Project config file (default: `<root>/agentic-typer.json` when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Migration phase: minimal-setup, full-coverage, or strict-mode.
    #[arg(long, global = true)]
    pub phase: Option<String>,

    /// Concurrent agent sessions.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    /// Agent backend: `scripted` or `external:<command>`.
    #[arg(long, global = true)]
    pub backend: Option<String>,

    /// Edit hook mode: reject or alert.
    #[arg(long, global = true)]
    pub hook_mode: Option<String>,

    /// Verification rounds after the parallel wave.
    #[arg(long, global = true)]
    pub rounds: Option<u32>,

    /// Baseline suppression manifest for the necessary/additional split.
    #[arg(long, global = true)]
    pub baseline: Option<PathBuf>,

    /// Dollars per million input tokens.
    #[arg(long, global = true)]
    pub price_in: Option<f64>,

    /// Dollars per million output tokens.
    #[arg(long, global = true)]
    pub price_out: Option<f64>,

    /// Print intended edits without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,

    /// Where to write the JSON report.
    #[arg(long, global = true)]
    pub json_out: Option<PathBuf>,

    /// Where to write the run event log.
    #[arg(long, global = true)]
    pub log_out: Option<PathBuf>,

    /// Type checker executable (default: project-local, then PATH).
    #[arg(long, global = true)]
    pub checker: Option<PathBuf>,

    /// JSON file mapping diagnostic codes to bug/valid_pattern.
    #[arg(long, global = true)]
    pub classification_map: Option<PathBuf>,

    /// Tool-call budget per attempt.
    #[arg(long, global = true)]
    pub max_turns: Option<u32>,

    /// Verification retries per session.
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,

    /// Repository label used in reports.
    #[arg(long, global = true)]
    pub repo_label: Option<String>,

    /// Seconds to wait for each external-backend frame.
    #[arg(long, global = true)]
    pub turn_timeout: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Scripted,
    External(String),
}

impl BackendChoice {
    fn parse(text: &str) -> Result<Self, String> {
        if text == "scripted" {
            return Ok(BackendChoice::Scripted);
        }
        if let Some(cmd) = text.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err("external backend requires an endpoint: external:<command>".into());
            }
            return Ok(BackendChoice::External(cmd.to_string()));
        }
        Err(format!("unknown backend {text:?} (expected scripted or external:<command>)"))
    }
}

/// Fully resolved configuration for one invocation.
#[derive(Debug)]
pub struct EffectiveConfig {
    pub root: PathBuf,
    pub phase: Phase,
    pub parallelism: usize,
    pub backend: BackendChoice,
    pub hook_mode: HookMode,
    pub verification_rounds: u32,
    pub baseline: Option<PathBuf>,
    pub price: PriceSheet,
    pub dry_run: bool,
    pub json_out: PathBuf,
    pub log_out: PathBuf,
    pub checker: Option<PathBuf>,
    pub classification: ClassificationMap,
    pub max_turns: u32,
    pub max_attempts: u32,
    pub repo_label: String,
    pub turn_timeout: Duration,
}

fn resolve_against(root: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        root.join(p)
    }
}

impl EffectiveConfig {
    /// Merge flags over the project file over defaults.
    pub fn resolve(args: &GlobalArgs) -> Result<Self, String> {
        let root = args.root.clone();
        let file_path = args
            .config
            .clone()
            .unwrap_or_else(|| root.join(PROJECT_CONFIG_FILE));
        let file: ProjectFileConfig = if file_path.is_file() {
            let text = std::fs::read_to_string(&file_path)
                .map_err(|e| format!("cannot read {}: {e}", file_path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("invalid project config {}: {e}", file_path.display()))?
        } else if args.config.is_some() {
            return Err(format!("project config {} does not exist", file_path.display()));
        } else {
            ProjectFileConfig::default()
        };

        let phase = match args.phase.as_deref().or(file.phase.as_deref()) {
            Some(text) => text.parse::<Phase>()?,
            None => Phase::MinimalSetup,
        };
        let parallelism = args.parallelism.or(file.parallelism).unwrap_or(10);
        if parallelism < 1 {
            return Err("parallelism must be at least 1".into());
        }
        let backend = match args.backend.as_deref().or(file.backend.as_deref()) {
            Some(text) => BackendChoice::parse(text)?,
            None => BackendChoice::Scripted,
        };
        let hook_mode = match args.hook_mode.as_deref().or(file.hook_mode.as_deref()) {
            Some(text) => text.parse::<HookMode>()?,
            None => HookMode::Reject,
        };
        let classification = match args
            .classification_map
            .clone()
            .or_else(|| file.classification_map.clone().map(|p| resolve_against(&root, p)))
        {
            Some(path) => ClassificationMap::load(&path)?,
            None => ClassificationMap::default(),
        };
        let repo_label = args.repo_label.clone().or(file.repo_label.clone()).unwrap_or_else(|| {
            root.canonicalize()
                .ok()
                .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "repo".to_string())
        });

        let out_dir = root.join(".agentic-typer");
        Ok(EffectiveConfig {
            phase,
            parallelism,
            backend,
            hook_mode,
            classification,
            verification_rounds: args.rounds.or(file.verification_rounds).unwrap_or(3),
            baseline: args
                .baseline
                .clone()
                .or_else(|| file.baseline.clone().map(|p| resolve_against(&root, p))),
            price: PriceSheet {
                input_per_million: args.price_in.or(file.price_in).unwrap_or(0.0),
                output_per_million: args.price_out.or(file.price_out).unwrap_or(0.0),
            },
            dry_run: args.dry_run,
            json_out: args
                .json_out
                .clone()
                .or_else(|| file.json_out.clone().map(|p| resolve_against(&root, p)))
                .unwrap_or_else(|| out_dir.join("report.json")),
            log_out: args
                .log_out
                .clone()
                .or_else(|| file.log_out.clone().map(|p| resolve_against(&root, p)))
                .unwrap_or_else(|| out_dir.join("events.jsonl")),
            checker: args
                .checker
                .clone()
                .or_else(|| file.checker.clone().map(|p| resolve_against(&root, p))),
            max_turns: args.max_turns.or(file.max_turns).unwrap_or(30),
            max_attempts: args.max_attempts.or(file.max_attempts).unwrap_or(3),
            repo_label,
            turn_timeout: Duration::from_secs(
                args.turn_timeout.or(file.turn_timeout_secs).unwrap_or(120),
            ),
            root,
        })
    }
}
