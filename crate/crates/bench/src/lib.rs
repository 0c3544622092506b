//! Synthetic source generation shared by the benchmarks.

/// Deterministic JavaScript-ish module of roughly `lines` lines, exercising
/// strings, templates, regexes, and numeric notations. Only needs to lex;
/// it is not meant to run.
pub fn synthetic_source(lines: usize) -> String {
    let mut out = String::with_capacity(lines * 40);
    out.push_str("// synthetic module\n'use strict';\n");
    for i in 1..=lines.saturating_sub(2) {
        match i % 7 {
            0 => out.push_str(&format!("function fn{i}(a, b) {{ return a * b + {i}; }}\n")),
            1 => out.push_str(&format!("const s{i} = 'item-{i}';\n")),
            2 => out.push_str(&format!("const t{i} = `row ${{s{}}} of {i}`;\n", i - 1)),
            3 => out.push_str(&format!("const re{i} = /^[a-z]{{{}}}\\d+$/g;\n", i % 9 + 1)),
            4 => out.push_str(&format!("let n{i} = 0x{i:x} + {i}.5e-2;\n")),
            5 => out.push_str(&format!("/* block note {i} */ const o{i} = {{ k: {i} }};\n")),
            _ => out.push_str(&format!(
                "if (x > {i}) {{ probe({i}, 'p{i}'); }} // tail\n"
            )),
        }
    }
    out
}
