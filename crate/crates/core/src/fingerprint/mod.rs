//! Behavior-preservation core: canonical comment-free token streams and a
//! stable digest over them.
//!
//! Two sources with equal fingerprints are guaranteed to differ only in
//! comments and inter-token whitespace. The check is deliberately
//! conservative: lexemes compare verbatim (`0x10` differs from `16`, `'a'`
//! from `"a"`), so a false alarm is always preferred over a missed behavior
//! change.

mod diff;
mod lexer;

pub use diff::{token_diff, EditKind, TokenDiff, TokenEdit};
pub use lexer::{lex_canonical, LexError, Token, TokenKind};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Canonical token stream of a source file plus a 256-bit digest over it.
///
/// Equality is decided by the token list; the hash is a fast path (hashes
/// differ ⇒ streams differ) and the framing below makes independent
/// implementations agree: for each token in order, one kind-tag byte, `0x1F`,
/// the UTF-8 lexeme bytes, `0x1E`, fed to SHA-256.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fingerprint {
    tokens: Vec<Token>,
    /// 1-based starting line of each token, kept for diff annotation only;
    /// never part of equality.
    lines: Vec<u32>,
    hash: [u8; 32],
}

impl Fingerprint {
    pub fn compute(source: &str) -> Result<Self, LexError> {
        let spanned = lexer::lex_spanned(source)?;
        let hash = digest_tokens(&spanned.tokens);
        Ok(Fingerprint { tokens: spanned.tokens, lines: spanned.lines, hash })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn hash_bytes(&self) -> &[u8; 32] {
        &self.hash
    }

    /// Lowercase hex rendering of the digest, 64 chars, platform-stable.
    pub fn hash_hex(&self) -> String {
        to_hex(&self.hash)
    }

    pub(crate) fn token_line(&self, idx: usize) -> u32 {
        if self.lines.is_empty() {
            1
        } else {
            self.lines[idx.min(self.lines.len() - 1)]
        }
    }
}

impl PartialEq for Fingerprint {
    fn eq(&self, other: &Self) -> bool {
        // Hash inequality settles it; on hash equality the token lists are
        // authoritative.
        self.hash == other.hash && self.tokens == other.tokens
    }
}

impl Eq for Fingerprint {}

/// Fingerprint a source text. Convenience for [`Fingerprint::compute`].
pub fn fingerprint(source: &str) -> Result<Fingerprint, LexError> {
    Fingerprint::compute(source)
}

fn digest_tokens(tokens: &[Token]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for t in tokens {
        hasher.update([t.kind.tag(), 0x1F]);
        hasher.update(t.lexeme.as_bytes());
        hasher.update([0x1E]);
    }
    hasher.finalize().into()
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// SHA-256 of arbitrary bytes, lowercase hex. Used for anchor-line content
/// hashes in suppression manifests.
pub fn sha256_hex(data: &[u8]) -> String {
    to_hex(&Sha256::digest(data))
}
