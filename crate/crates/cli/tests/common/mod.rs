//! Fixture corpora and helpers shared by the CLI integration and acceptance
//! suites.

// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]
//!
//! Corpora are generated deterministically from seeded-error templates whose
//! diagnostic codes were captured from a reference checker run; the expected
//! counts are frozen here and re-verified against the live checker by the
//! tests that use them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use agentic_typer_core::fingerprint::sha256_hex;
use agentic_typer_core::report::BaselineEntry;

pub const CLI_BIN: &str = env!("CARGO_BIN_EXE_agentic-typer");
pub const REF_BACKEND_BIN: &str = env!("CARGO_BIN_EXE_agentic-typer-ref-backend");

#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: &'static str,
    pub files: Vec<(String, String)>,
    pub expected_initial_errors: usize,
    pub expected_distinct_codes: usize,
}

impl Corpus {
    pub fn materialize(&self, dir: &Path) {
        for (path, content) in &self.files {
            let abs = dir.join(path);
            std::fs::create_dir_all(abs.parent().unwrap()).unwrap();
            std::fs::write(abs, content).unwrap();
        }
    }

    pub fn total_loc(&self) -> usize {
        self.files
            .iter()
            .filter(|(p, _)| p.ends_with(".js") && !p.contains("node_modules"))
            .map(|(_, c)| c.split('\n').filter(|l| !l.trim().is_empty()).count())
            .sum()
    }
}

/// One seeded-error block: source text plus the diagnostic codes the
/// reference checker reports for it, in line order, with 0-based line
/// offsets of the erroring lines within the block.
fn seed_block(kind: usize, i: usize) -> (String, Vec<(&'static str, usize)>) {
    match kind % 9 {
        0 => (
            format!("/** @type {{number}} */\nlet typed{i} = \"s{i}\";\n"),
            vec![("TS2322", 1)],
        ),
        1 => (
            format!("function two{i}(a, b) {{ return a; }}\ntwo{i}(1, 2, 3);\n"),
            vec![("TS2554", 1)],
        ),
        2 => (
            format!(
                "/** @param {{string}} s */\nfunction greet{i}(s) {{ return s; }}\ngreet{i}(42);\n"
            ),
            vec![("TS2345", 2)],
        ),
        3 => (
            format!("const str{i} = \"text\";\nconst bad{i} = str{i}.missing{i};\n"),
            vec![("TS2339", 1)],
        ),
        4 => (format!("const ghost{i} = mystery{i} + 1;\n"), vec![("TS2304", 0)]),
        5 => (
            format!("let dup{i} = 1;\nlet dup{i} = 2;\n"),
            vec![("TS2451", 0), ("TS2451", 1)],
        ),
        6 => (
            format!("const num{i} = 1;\nconst res{i} = num{i}();\n"),
            vec![("TS2349", 1)],
        ),
        7 => (format!("const prod{i} = \"a\" * {i};\n"), vec![("TS2362", 0)]),
        // Two distinct diagnostics on one line; a single directive must
        // silence both.
        8 => (
            format!(
                "/** @param {{string}} s */\nfunction pair{i}(s) {{ return s; }}\nconst out{i} = pair{i}(42).missing{i};\n"
            ),
            vec![("TS2345", 2), ("TS2339", 2)],
        ),
        _ => unreachable!(),
    }
}

/// Clean, checker-quiet filler used to reach realistic file sizes.
fn filler_block(i: usize) -> String {
    match i % 4 {
        0 => format!(
            "/**\n * Scales a measurement.\n * @param {{number}} v raw value\n * @returns {{number}} scaled value\n */\nfunction scale{i}(v) {{\n  const factor = 3 + ({i} % 7);\n  return v * factor;\n}}\n"
        ),
        1 => format!(
            "const LABELS{i} = ['low', 'mid', 'high'];\n/**\n * @param {{number}} idx\n * @returns {{string}}\n */\nfunction label{i}(idx) {{\n  return `tier ${{LABELS{i}[idx % LABELS{i}.length]}}-{i}`;\n}}\n"
        ),
        2 => format!(
            "const SLUG_RE{i} = /^[a-z0-9-]+$/;\n/**\n * @param {{string}} text\n * @returns {{boolean}}\n */\nfunction isSlug{i}(text) {{\n  return SLUG_RE{i}.test(text) && text.length > {};\n}}\n",
            i % 5
        ),
        _ => format!(
            "class Counter{i} {{\n  constructor() {{\n    this.total = {i};\n  }}\n  /**\n   * @param {{number}} by\n   */\n  bump(by) {{\n    this.total += by;\n    return this.total;\n  }}\n}}\n"
        ),
    }
}

/// Assemble one module from filler and seed blocks. Returns the content and
/// the codes seeded into it.
fn module(seq: &mut usize, fillers: usize, seeds: &[usize]) -> (String, Vec<&'static str>) {
    let mut content = String::new();
    let mut codes = Vec::new();
    let mut seeds_iter = seeds.iter();
    for slot in 0..fillers.max(seeds.len()) {
        if slot < fillers {
            *seq += 1;
            content.push_str(&filler_block(*seq));
            content.push('\n');
        }
        if let Some(&kind) = seeds_iter.next() {
            *seq += 1;
            let (block, block_codes) = seed_block(kind, *seq);
            content.push_str(&block);
            content.push('\n');
            codes.extend(block_codes.iter().map(|(c, _)| *c));
        }
    }
    (content, codes)
}

fn count_distinct(codes: &[&str]) -> usize {
    let set: std::collections::BTreeSet<&str> = codes.iter().copied().collect();
    set.len()
}

/// ~0.6K LOC, 12 seeded errors across 8 distinct codes.
pub fn corpus_alpha() -> Corpus {
    let mut seq = 0;
    let mut files = Vec::new();
    let mut all_codes: Vec<&str> = Vec::new();
    let layout: &[(&str, usize, &[usize])] = &[
        ("src/config.js", 9, &[0, 1]),
        ("src/util/strings.js", 9, &[2, 3]),
        ("src/util/math.js", 9, &[4, 5]),
        ("src/models/user.js", 9, &[6, 7]),
        ("src/api.js", 9, &[0, 6]),
        ("src/index.js", 9, &[1]),
    ];
    for (path, fillers, seeds) in layout {
        let (content, codes) = module(&mut seq, *fillers, seeds);
        all_codes.extend(codes);
        files.push((path.to_string(), content));
    }
    Corpus {
        name: "alpha",
        files,
        expected_initial_errors: all_codes.len(),
        expected_distinct_codes: count_distinct(&all_codes),
    }
}

/// ~2.5K LOC, 30 seeded errors, CRLF file, excluded decoy trees.
pub fn corpus_beta() -> Corpus {
    let mut seq = 1000;
    let mut files = Vec::new();
    let mut all_codes: Vec<&str> = Vec::new();
    for file_idx in 0..11 {
        let seeds: Vec<usize> = vec![(file_idx * 2) % 8, (file_idx * 2 + 1) % 8];
        let (content, codes) = module(&mut seq, 24, &seeds);
        all_codes.extend(codes);
        files.push((format!("src/mod_{file_idx:02}.js"), content));
    }
    // One CRLF module with a seeded error; insertion must preserve endings.
    {
        seq += 1;
        let (block, codes) = seed_block(4, seq);
        let lf = format!("{}{}", filler_block(seq + 500), block);
        let crlf = lf.replace('\n', "\r\n");
        all_codes.extend(codes.iter().map(|(c, _)| *c));
        files.push(("src/legacy/crlf.js".to_string(), crlf));
    }
    // Seeded remainder, including a line carrying two distinct diagnostics
    // (one directive must silence both).
    for (n, kind) in [(0usize, 5usize), (1, 2), (2, 8)] {
        seq += 1;
        let (block, codes) = seed_block(kind, seq);
        all_codes.extend(codes.iter().map(|(c, _)| *c));
        files.push((format!("src/extra_{n}.js"), block));
    }
    // A stale tool-tagged directive over a clean line: the checker reports
    // it unused and cleanup must remove it during the run.
    files.push((
        "src/stale.js".to_string(),
        "// @ts-expect-error -- [agentic-typer:valid] no longer needed\nexport const fine = 1;\n"
            .to_string(),
    ));
    all_codes.push("TS2578");
    // Decoys that must never be discovered or checked; both contain errors
    // that would change the counts if they leaked in.
    files.push((
        "node_modules/decoy/index.js".to_string(),
        "/** @type {number} */\nlet leak = \"nope\";\n".to_string(),
    ));
    files.push((
        ".cache/skip.js".to_string(),
        "undeclaredDecoy();\n".to_string(),
    ));
    files.push((
        "dist/bundle.js".to_string(),
        "/** @type {number} */\nlet built = \"nope\";\n".to_string(),
    ));
    Corpus {
        name: "beta",
        files,
        expected_initial_errors: all_codes.len(),
        expected_distinct_codes: count_distinct(&all_codes),
    }
}

/// ~4.7K LOC, 54 seeded errors.
pub fn corpus_gamma() -> Corpus {
    let mut seq = 5000;
    let mut files = Vec::new();
    let mut all_codes: Vec<&str> = Vec::new();
    for file_idx in 0..16 {
        let seeds: Vec<usize> = (0..3).map(|k| (file_idx * 3 + k) % 8).collect();
        let (content, codes) = module(&mut seq, 30, &seeds);
        all_codes.extend(codes);
        files.push((format!("src/svc/part_{file_idx:02}.js"), content));
    }
    Corpus {
        name: "gamma",
        files,
        expected_initial_errors: all_codes.len(),
        expected_distinct_codes: count_distinct(&all_codes),
    }
}

/// Two files where a comment-only annotation fix in `a` surfaces a fresh
/// error in `b`: the cross-file cascade fixture.
pub fn cascade_fixture() -> Vec<(String, String)> {
    vec![
        (
            "src/a.js".to_string(),
            "/** @returns {number} */\nexport function width() {\n  return \"42\";\n}\n"
                .to_string(),
        ),
        (
            "src/b.js".to_string(),
            "import { width } from './a';\n\n/** @type {number} */\nconst w = width();\nexport { w };\n"
                .to_string(),
        ),
    ]
}

/// A repository importing a package that has no installed type
/// declarations; the error is delegated, never suppressed, and the run
/// cannot fully resolve.
pub fn withheld_types_fixture() -> Vec<(String, String)> {
    vec![
        (
            "package.json".to_string(),
            "{\n  \"name\": \"withheld-fixture\",\n  \"private\": true\n}\n".to_string(),
        ),
        (
            "src/needs.js".to_string(),
            "import pad from 'left-pad';\nexport const padded = pad(\"x\", 5);\n".to_string(),
        ),
        (
            "src/also.js".to_string(),
            "export const ghost = missingName + 1;\n".to_string(),
        ),
    ]
}

/// Multi-use bug fixture: one arity bug at the definition, three erroring
/// call sites. The oracle baseline blesses only the first site (plus the
/// two unrelated errors), so a suppress-every-site run reports exactly two
/// additional suppressions.
pub struct OverSuppressionFixture {
    pub files: Vec<(String, String)>,
    pub baseline: Vec<BaselineEntry>,
    pub expected_necessary: u64,
    pub expected_additional: u64,
}

pub fn over_suppression_fixture() -> OverSuppressionFixture {
    let dup = "function combine(a, b) {\n  return a + b;\n}\nconst r1 = combine(1, 2, 3);\nconst r2 = combine(4, 5, 6);\nconst r3 = combine(7, 8, 9);\nexport { combine, r1, r2, r3 };\n";
    let other = "/** @type {number} */\nlet count = \"zero\";\nconst ghost = missingName + 1;\nexport { count, ghost };\n";
    let baseline = vec![
        BaselineEntry {
            path: "src/dup.js".into(),
            anchor_content_hash: sha256_hex(b"const r1 = combine(1, 2, 3);"),
            codes: vec!["TS2554".into()],
        },
        BaselineEntry {
            path: "src/other.js".into(),
            anchor_content_hash: sha256_hex(b"let count = \"zero\";"),
            codes: vec!["TS2322".into()],
        },
        BaselineEntry {
            path: "src/other.js".into(),
            anchor_content_hash: sha256_hex(b"const ghost = missingName + 1;"),
            codes: vec!["TS2304".into()],
        },
    ];
    OverSuppressionFixture {
        files: vec![
            ("src/dup.js".to_string(), dup.to_string()),
            ("src/other.js".to_string(), other.to_string()),
        ],
        baseline,
        expected_necessary: 3,
        expected_additional: 2,
    }
}

/// Run the CLI binary; returns (exit_code, stdout, stderr).
pub fn run_cli(root: &Path, args: &[&str]) -> (i32, String, String) {
    let output = Command::new(CLI_BIN)
        .arg("--root")
        .arg(root)
        .args(args)
        .output()
        .expect("cli binary runs");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

/// Invoke the real checker directly: the independent oracle for acceptance.
pub fn tsc_output(root: &Path) -> (i32, String) {
    let output = Command::new("tsc")
        .current_dir(root)
        .args(["-p", ".", "--pretty", "false"])
        .output()
        .expect("tsc present in the environment");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
    )
}

/// All regular files under `root` (excluding the tool's own output dir),
/// keyed by relative path.
pub fn snapshot_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if path.is_dir() {
                if name == ".agentic-typer" {
                    continue;
                }
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn write_files(dir: &Path, files: &[(String, String)]) {
    for (path, content) in files {
        let abs = dir.join(path);
        std::fs::create_dir_all(abs.parent().unwrap()).unwrap();
        std::fs::write(abs, content).unwrap();
    }
}

/// Path of a file inside the test temp dir.
pub fn read_rel(root: &Path, rel: &str) -> String {
    std::fs::read_to_string(root.join(rel)).unwrap()
}

pub fn corpora() -> Vec<Corpus> {
    vec![corpus_alpha(), corpus_beta(), corpus_gamma()]
}

/// Where acceptance artifacts (golden files) live.
pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}
