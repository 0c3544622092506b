//! Target-repository setup: source discovery, per-phase checker config
//! scaffolding, missing type-declaration package resolution, and baseline
//! content snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::Diagnostic;
use crate::fingerprint::Fingerprint;

/// Checker configuration file at the repository root.
pub const CHECKER_CONFIG_FILE: &str = "tsconfig.json";
/// Package manifest at the repository root.
pub const PACKAGE_MANIFEST_FILE: &str = "package.json";

/// Migration phases, strictly ordered; transitions only advance one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    MinimalSetup,
    FullCoverage,
    StrictMode,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::MinimalSetup => Some(Phase::FullCoverage),
            Phase::FullCoverage => Some(Phase::StrictMode),
            Phase::StrictMode => None,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::MinimalSetup => f.write_str("minimal-setup"),
            Phase::FullCoverage => f.write_str("full-coverage"),
            Phase::StrictMode => f.write_str("strict-mode"),
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minimal-setup" => Ok(Phase::MinimalSetup),
            "full-coverage" => Ok(Phase::FullCoverage),
            "strict-mode" => Ok(Phase::StrictMode),
            other => Err(format!(
                "unknown phase {other:?} (expected minimal-setup, full-coverage, or strict-mode)"
            )),
        }
    }
}

/// Checker flags plus the source globs. Field names map onto the checker's
/// published config schema when written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckerConfig {
    pub allow_untyped_sources: bool,
    pub check_untyped_sources: bool,
    pub suppress_emit: bool,
    pub no_implicit_any: bool,
    pub strict: bool,
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
}

pub fn default_include_globs() -> Vec<String> {
    vec!["**/*.js".to_string()]
}

/// Dependency and build-output trees; hidden directories are additionally
/// skipped during discovery, matching the checker's own glob behavior.
pub fn default_exclude_globs() -> Vec<String> {
    ["**/node_modules/**", "**/dist/**", "**/build/**", "**/coverage/**"]
        .map(String::from)
        .to_vec()
}

impl CheckerConfig {
    pub fn for_phase(phase: Phase) -> Self {
        CheckerConfig {
            allow_untyped_sources: true,
            check_untyped_sources: true,
            suppress_emit: true,
            no_implicit_any: phase >= Phase::FullCoverage,
            strict: phase >= Phase::StrictMode,
            include_globs: default_include_globs(),
            exclude_globs: default_exclude_globs(),
        }
    }

    /// Byte-stable rendering: two-space indent, fixed key order, trailing
    /// newline.
    pub fn to_config_string(&self) -> String {
        let file = ConfigFile::from(self);
        let mut s = serde_json::to_string_pretty(&file).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_config_str(text: &str) -> Result<Self, WorkspaceError> {
        let file: ConfigFile = serde_json::from_str(text)
            .map_err(|e| WorkspaceError::ConfigParse(e.to_string()))?;
        Ok(file.into())
    }
}

/// On-disk shape of the checker config, in the checker's schema.
#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    #[serde(rename = "compilerOptions")]
    compiler_options: CompilerOptions,
    #[serde(default = "default_include_globs")]
    include: Vec<String>,
    #[serde(default)]
    exclude: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CompilerOptions {
    #[serde(rename = "allowJs", default)]
    allow_js: bool,
    #[serde(rename = "checkJs", default)]
    check_js: bool,
    #[serde(rename = "noEmit", default)]
    no_emit: bool,
    #[serde(rename = "noImplicitAny", default)]
    no_implicit_any: bool,
    #[serde(default)]
    strict: bool,
}

impl From<&CheckerConfig> for ConfigFile {
    fn from(c: &CheckerConfig) -> Self {
        ConfigFile {
            compiler_options: CompilerOptions {
                allow_js: c.allow_untyped_sources,
                check_js: c.check_untyped_sources,
                no_emit: c.suppress_emit,
                no_implicit_any: c.no_implicit_any,
                strict: c.strict,
            },
            include: c.include_globs.clone(),
            exclude: c.exclude_globs.clone(),
        }
    }
}

impl From<ConfigFile> for CheckerConfig {
    fn from(f: ConfigFile) -> Self {
        CheckerConfig {
            allow_untyped_sources: f.compiler_options.allow_js,
            check_untyped_sources: f.compiler_options.check_js,
            suppress_emit: f.compiler_options.no_emit,
            no_implicit_any: f.compiler_options.no_implicit_any,
            strict: f.compiler_options.strict,
            include_globs: f.include,
            exclude_globs: f.exclude,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checker config: {0}")]
    ConfigParse(String),
    #[error(
        "existing {CHECKER_CONFIG_FILE} has stricter flags than phase {phase} would write; \
         pass the overwrite flag to replace it"
    )]
    ConflictingConfig { phase: Phase },
    #[error("invalid glob pattern {pattern:?}: {source}")]
    BadGlob {
        pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("invalid package manifest: {0}")]
    ManifestParse(String),
}

/// Write the checker config for `phase` at `root` and return it. Re-running
/// for the same phase is a byte-identical no-op. An existing config with
/// stricter flags than the target refuses unless `overwrite` is set.
pub fn scaffold_config(
    root: &Path,
    phase: Phase,
    overwrite: bool,
) -> Result<CheckerConfig, WorkspaceError> {
    let target = CheckerConfig::for_phase(phase);
    let rendered = target.to_config_string();
    let config_path = root.join(CHECKER_CONFIG_FILE);
    if config_path.exists() {
        let existing_text = fs::read_to_string(&config_path).map_err(|e| {
            WorkspaceError::Unreadable { path: config_path.display().to_string(), source: e }
        })?;
        if existing_text == rendered {
            return Ok(target);
        }
        if !overwrite {
            match CheckerConfig::from_config_str(&existing_text) {
                Ok(existing) => {
                    let stricter = (existing.no_implicit_any && !target.no_implicit_any)
                        || (existing.strict && !target.strict);
                    if stricter {
                        return Err(WorkspaceError::ConflictingConfig { phase });
                    }
                }
                Err(_) => return Err(WorkspaceError::ConflictingConfig { phase }),
            }
        }
    }
    fs::write(&config_path, &rendered).map_err(|e| WorkspaceError::Unwritable {
        path: config_path.display().to_string(),
        source: e,
    })?;
    Ok(target)
}

/// One discovered source file with its run-start baseline.
#[derive(Debug, Clone)]
pub struct FileRecord {
    /// Repo-relative, forward slashes.
    pub path: String,
    pub baseline_content: Vec<u8>,
    pub baseline_fingerprint: Fingerprint,
    /// Physical non-blank lines.
    pub loc: usize,
}

/// A file that matched the globs but could not be snapshotted; surfaced as
/// a warning in the run report, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct DiscoveredSources {
    pub records: Vec<FileRecord>,
    pub skipped: Vec<SkippedFile>,
}

impl DiscoveredSources {
    pub fn total_loc(&self) -> u64 {
        self.records.iter().map(|r| r.loc as u64).sum()
    }

    pub fn baselines(&self) -> BTreeMap<String, Fingerprint> {
        self.records
            .iter()
            .map(|r| (r.path.clone(), r.baseline_fingerprint.clone()))
            .collect()
    }
}

/// Number of newline-delimited lines containing at least one non-whitespace
/// character.
pub fn count_loc(text: &str) -> usize {
    text.split('\n').filter(|l| l.chars().any(|c| !c.is_whitespace())).count()
}

fn build_globset(patterns: &[String]) -> Result<GlobSet, WorkspaceError> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p)
            .map_err(|e| WorkspaceError::BadGlob { pattern: p.clone(), source: e })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| WorkspaceError::BadGlob {
        pattern: patterns.join(", "),
        source: e,
    })
}

/// Directory names to prune during the walk, extracted from exclude globs of
/// the `**/<name>/**` shape.
fn prune_names(exclude_globs: &[String]) -> Vec<String> {
    exclude_globs
        .iter()
        .filter_map(|g| {
            g.strip_prefix("**/")
                .and_then(|rest| rest.strip_suffix("/**"))
                .filter(|mid| !mid.is_empty() && !mid.contains(['/', '*', '?', '[']))
                .map(String::from)
        })
        .collect()
}

/// Walk `root` and snapshot every file matching the config's include globs
/// minus its exclude globs, ordered lexicographically by path. Unreadable,
/// non-UTF-8, or unlexable files are recorded as skipped (agents could never
/// edit them safely), not errors.
pub fn discover_sources(
    root: &Path,
    config: &CheckerConfig,
) -> Result<DiscoveredSources, WorkspaceError> {
    if !root.is_dir() {
        return Err(WorkspaceError::Unreadable {
            path: root.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let include = build_globset(&config.include_globs)?;
    let exclude = build_globset(&config.exclude_globs)?;
    let prune = prune_names(&config.exclude_globs);

    let mut paths: Vec<String> = Vec::new();
    let walker = walkdir::WalkDir::new(root).follow_links(false).into_iter();
    let is_pruned = |entry: &walkdir::DirEntry| {
        entry.depth() > 0
            && entry.file_type().is_dir()
            && entry
                .file_name()
                .to_str()
                .is_some_and(|n| n.starts_with('.') || prune.iter().any(|p| p == n))
    };
    for entry in walker.filter_entry(|e| !is_pruned(e)) {
        let entry = match entry {
            Ok(e) => e,
            Err(_) => continue,
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let rel = rel.to_string_lossy().replace('\\', "/");
        if include.is_match(&rel) && !exclude.is_match(&rel) {
            paths.push(rel);
        }
    }
    paths.sort();

    let mut out = DiscoveredSources::default();
    for rel in paths {
        let abs = root.join(&rel);
        let bytes = match fs::read(&abs) {
            Ok(b) => b,
            Err(e) => {
                out.skipped.push(SkippedFile { path: rel, reason: format!("unreadable: {e}") });
                continue;
            }
        };
        let text = match std::str::from_utf8(&bytes) {
            Ok(t) => t,
            Err(e) => {
                out.skipped
                    .push(SkippedFile { path: rel, reason: format!("not valid UTF-8: {e}") });
                continue;
            }
        };
        let fp = match Fingerprint::compute(text) {
            Ok(fp) => fp,
            Err(e) => {
                out.skipped
                    .push(SkippedFile { path: rel, reason: format!("does not lex: {e}") });
                continue;
            }
        };
        out.records.push(FileRecord {
            path: rel,
            loc: count_loc(text),
            baseline_fingerprint: fp,
            baseline_content: bytes,
        });
    }
    Ok(out)
}

/// A module name mapped to its conventional declaration-package name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypesPackage {
    pub module: String,
    pub package: String,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct MissingTypesResolution {
    /// Deduplicated, sorted by module name.
    pub packages: Vec<TypesPackage>,
    pub warnings: Vec<String>,
}

/// Diagnostic codes that indicate a missing declaration package.
pub fn default_missing_decl_codes() -> Vec<String> {
    vec!["TS2307".to_string(), "TS7016".to_string()]
}

/// Conventional declaration-package name: `express` -> `@types/express`;
/// scoped `@org/pkg` -> `@types/org__pkg`.
pub fn declaration_package_name(module: &str) -> String {
    if let Some(scoped) = module.strip_prefix('@') {
        format!("@types/{}", scoped.replace('/', "__"))
    } else {
        format!("@types/{module}")
    }
}

/// Extract missing-module diagnostics and map each imported module to its
/// declaration package. Pure over the diagnostic multiset; nothing is read
/// from disk and nothing is installed.
pub fn resolve_missing_types(
    diags: &[Diagnostic],
    missing_decl_codes: &[String],
) -> MissingTypesResolution {
    static MODULE_RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let module_re =
        MODULE_RE.get_or_init(|| Regex::new(r"module '([^']+)'").expect("module name regex"));

    let mut modules: BTreeMap<String, ()> = BTreeMap::new();
    let mut warnings = Vec::new();
    for d in diags {
        if !missing_decl_codes.iter().any(|c| c == &d.code) {
            continue;
        }
        match module_re.captures(&d.message) {
            Some(caps) => {
                let module = caps[1].to_string();
                // Relative and absolute specifiers are unresolved files, not
                // declaration-package candidates; already-typed packages have
                // nothing to add.
                if module.starts_with('.') || module.starts_with('/') {
                    continue;
                }
                if module.starts_with("@types/") {
                    continue;
                }
                modules.insert(module, ());
            }
            None => warnings.push(format!(
                "{}({},{}): could not extract a module name from {} message",
                d.path, d.line, d.column, d.code
            )),
        }
    }
    MissingTypesResolution {
        packages: modules
            .into_keys()
            .map(|m| TypesPackage { package: declaration_package_name(&m), module: m })
            .collect(),
        warnings,
    }
}

/// Append `packages` to the manifest's development-dependency list with
/// version specifier `"*"`, creating the manifest if absent. Existing
/// entries are left untouched. Returns the entries actually added.
/// Installation is delegated to the user's package tool.
pub fn append_dev_dependencies(
    root: &Path,
    packages: &[TypesPackage],
) -> Result<Vec<TypesPackage>, WorkspaceError> {
    if packages.is_empty() {
        return Ok(Vec::new());
    }
    let manifest_path = root.join(PACKAGE_MANIFEST_FILE);
    let mut manifest: serde_json::Value = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| {
            WorkspaceError::Unreadable { path: manifest_path.display().to_string(), source: e }
        })?;
        serde_json::from_str(&text).map_err(|e| WorkspaceError::ManifestParse(e.to_string()))?
    } else {
        serde_json::json!({})
    };
    let obj = manifest
        .as_object_mut()
        .ok_or_else(|| WorkspaceError::ManifestParse("manifest root is not an object".into()))?;
    let deps = obj
        .entry("devDependencies")
        .or_insert_with(|| serde_json::json!({}))
        .as_object_mut()
        .ok_or_else(|| WorkspaceError::ManifestParse("devDependencies is not an object".into()))?;
    let mut added = Vec::new();
    for p in packages {
        if !deps.contains_key(&p.package) {
            deps.insert(p.package.clone(), serde_json::Value::String("*".into()));
            added.push(p.clone());
        }
    }
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| WorkspaceError::ManifestParse(e.to_string()))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| WorkspaceError::Unwritable {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(added)
}
