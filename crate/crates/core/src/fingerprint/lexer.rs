//! Canonical tokenizer for the JavaScript lexical grammar.
//!
//! Comments and whitespace are dropped; everything else is kept verbatim
//! (string quotes, escapes, numeric notation). Regex-vs-division is
//! disambiguated by the previous-significant-token rule; ambiguity resolves
//! toward division. Both sides of a comparison use the same rule, which is
//! what the equivalence check needs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lexical class of a canonical token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Punctuator,
    NumericLiteral,
    StringLiteral,
    TemplateChunk,
    RegexLiteral,
}

impl TokenKind {
    /// Tag byte used in the fingerprint digest framing.
    pub fn tag(self) -> u8 {
        match self {
            TokenKind::Identifier => 0x01,
            TokenKind::Punctuator => 0x02,
            TokenKind::NumericLiteral => 0x03,
            TokenKind::StringLiteral => 0x04,
            TokenKind::TemplateChunk => 0x05,
            TokenKind::RegexLiteral => 0x06,
        }
    }
}

/// One canonical token: its class and the exact source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
}

impl Token {
    pub fn new(kind: TokenKind, lexeme: impl Into<String>) -> Self {
        Token { kind, lexeme: lexeme.into() }
    }
}

/// Tokenization failure, carrying the 1-based line of the offending token.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal starting on line {0}")]
    UnterminatedString(u32),
    #[error("unterminated template literal starting on line {0}")]
    UnterminatedTemplate(u32),
    #[error("unterminated regular expression starting on line {0}")]
    UnterminatedRegex(u32),
    #[error("unterminated block comment starting on line {0}")]
    UnterminatedBlockComment(u32),
    #[error("unexpected character {ch:?} on line {line}")]
    UnexpectedChar { ch: char, line: u32 },
}

impl LexError {
    pub fn line(&self) -> u32 {
        match *self {
            LexError::UnterminatedString(l)
            | LexError::UnterminatedTemplate(l)
            | LexError::UnterminatedRegex(l)
            | LexError::UnterminatedBlockComment(l) => l,
            LexError::UnexpectedChar { line, .. } => line,
        }
    }
}

/// Keywords after which a `/` starts a regular expression.
const REGEX_KEYWORDS: &[&str] = &[
    "return", "typeof", "instanceof", "in", "of", "new", "delete", "void", "throw", "case", "do",
    "else",
];

/// Punctuators after which a `/` starts a regular expression.
const REGEX_PUNCTUATORS: &[&str] =
    &["(", ",", "=", ":", "[", "!", "&", "|", "?", "{", "}", ";"];

/// Multi-character punctuators, longest first so maximal munch works by scan
/// order. `/`-initial operators are handled by the slash path, not here.
const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==",
    "!=", "<=", ">=", "&&", "||", "??", "?.", "**", "++", "--", "<<", ">>", "+=", "-=", "*=",
    "%=", "&=", "|=", "^=", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*", "%",
    "&", "|", "^", "!", "~", "?", ":", "=", ".",
];

/// Tokenize `source`, dropping comments and whitespace.
pub fn lex_canonical(source: &str) -> Result<Vec<Token>, LexError> {
    Ok(lex_spanned(source)?.tokens)
}

/// Token stream plus the 1-based starting line of each token.
#[derive(Debug, Clone, Default)]
pub(crate) struct SpannedTokens {
    pub tokens: Vec<Token>,
    pub lines: Vec<u32>,
}

pub(crate) fn lex_spanned(source: &str) -> Result<SpannedTokens, LexError> {
    Lexer::new(source).run()
}

/// Inside `${ ... }` of a template literal; `braces` counts nested plain
/// braces so the closing `}` of the substitution can be recognized.
struct TemplateExpr {
    braces: u32,
    template_line: u32,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    out: SpannedTokens,
    ctx: Vec<TemplateExpr>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0, line: 1, out: SpannedTokens::default(), ctx: Vec::new() }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    /// Consume one char, keeping the line counter current. `\r\n` counts as
    /// a single line break (counted at the `\n`).
    fn advance(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        match ch {
            '\n' | '\u{2028}' | '\u{2029}' => self.line += 1,
            '\r' if !self.rest().starts_with('\n') => self.line += 1,
            _ => {}
        }
        Some(ch)
    }

    fn emit(&mut self, kind: TokenKind, start: usize, start_line: u32) {
        self.out.tokens.push(Token::new(kind, &self.src[start..self.pos]));
        self.out.lines.push(start_line);
    }

    fn run(mut self) -> Result<SpannedTokens, LexError> {
        // A hashbang on the very first line is treated as a comment.
        if self.src.starts_with("#!") {
            while let Some(c) = self.peek() {
                if is_line_terminator(c) {
                    break;
                }
                self.advance();
            }
        }
        loop {
            self.skip_trivia()?;
            let Some(ch) = self.peek() else { break };
            let start = self.pos;
            let start_line = self.line;
            match ch {
                '\'' | '"' => self.scan_string(ch)?,
                '`' => {
                    self.advance();
                    self.scan_template_chunk(start, start_line)?;
                }
                '0'..='9' => self.scan_number(),
                '.' if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) => {
                    self.advance();
                    self.scan_decimal_tail();
                    self.emit(TokenKind::NumericLiteral, start, start_line);
                }
                '/' => self.scan_slash(start, start_line)?,
                '}' if self.ctx.last().is_some_and(|t| t.braces == 0) => {
                    self.ctx.pop();
                    self.advance();
                    self.scan_template_chunk(start, start_line)?;
                }
                _ if is_identifier_start(ch) => {
                    if ch == '#' && !self.peek_at(1).is_some_and(is_identifier_start) {
                        return Err(LexError::UnexpectedChar { ch, line: self.line });
                    }
                    self.advance();
                    while self.peek().is_some_and(is_identifier_continue) {
                        self.advance();
                    }
                    self.emit(TokenKind::Identifier, start, start_line);
                }
                _ => self.scan_punctuator(ch)?,
            }
        }
        if let Some(t) = self.ctx.pop() {
            return Err(LexError::UnterminatedTemplate(t.template_line));
        }
        Ok(self.out)
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        loop {
            match self.peek() {
                Some(c) if is_js_whitespace(c) || is_line_terminator(c) => {
                    self.advance();
                }
                Some('/') if self.peek_at(1) == Some('/') => {
                    while let Some(c) = self.peek() {
                        if is_line_terminator(c) {
                            break;
                        }
                        self.advance();
                    }
                }
                Some('/') if self.peek_at(1) == Some('*') => {
                    let open_line = self.line;
                    self.advance();
                    self.advance();
                    loop {
                        if self.rest().starts_with("*/") {
                            self.advance();
                            self.advance();
                            break;
                        }
                        if self.advance().is_none() {
                            return Err(LexError::UnterminatedBlockComment(open_line));
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn scan_string(&mut self, quote: char) -> Result<(), LexError> {
        let start = self.pos;
        let start_line = self.line;
        self.advance();
        loop {
            match self.peek() {
                None => return Err(LexError::UnterminatedString(start_line)),
                Some(c) if is_line_terminator(c) => {
                    return Err(LexError::UnterminatedString(start_line));
                }
                Some('\\') => {
                    self.advance();
                    // Escaped char may be a line terminator (continuation);
                    // a CRLF continuation spans both chars.
                    match self.advance() {
                        None => return Err(LexError::UnterminatedString(start_line)),
                        Some('\r') if self.peek() == Some('\n') => {
                            self.advance();
                        }
                        Some(_) => {}
                    }
                }
                Some(c) if c == quote => {
                    self.advance();
                    self.emit(TokenKind::StringLiteral, start, start_line);
                    return Ok(());
                }
                Some(_) => {
                    self.advance();
                }
            }
        }
    }

    /// Scan one template chunk starting at `start` (an opening backtick or
    /// the `}` that closes a substitution). The chunk lexeme includes its
    /// delimiters, ending either at a closing backtick or just past a `${`.
    fn scan_template_chunk(&mut self, start: usize, start_line: u32) -> Result<(), LexError> {
        loop {
            match self.peek() {
                None => return Err(LexError::UnterminatedTemplate(start_line)),
                Some('\\') => {
                    self.advance();
                    if self.advance().is_none() {
                        return Err(LexError::UnterminatedTemplate(start_line));
                    }
                }
                Some('`') => {
                    self.advance();
                    self.emit(TokenKind::TemplateChunk, start, start_line);
                    return Ok(());
                }
                Some('$') if self.peek_at(1) == Some('{') => {
                    self.advance();
                    self.advance();
                    self.emit(TokenKind::TemplateChunk, start, start_line);
                    self.ctx.push(TemplateExpr { braces: 0, template_line: start_line });
                    return Ok(());
                }
                Some(_) => {
                    self.advance();
                }
            }
        }
    }

    fn scan_number(&mut self) {
        let start = self.pos;
        let start_line = self.line;
        if self.peek() == Some('0')
            && self
                .peek_at(1)
                .is_some_and(|c| matches!(c, 'x' | 'X' | 'o' | 'O' | 'b' | 'B'))
        {
            self.advance();
            self.advance();
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.advance();
            }
        } else {
            while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                self.advance();
            }
            if self.peek() == Some('.') {
                self.advance();
                self.scan_decimal_tail();
                self.emit(TokenKind::NumericLiteral, start, start_line);
                return;
            }
            self.scan_exponent();
        }
        if self.peek() == Some('n') {
            self.advance();
        }
        self.emit(TokenKind::NumericLiteral, start, start_line);
    }

    /// Fraction digits plus optional exponent, after the dot.
    fn scan_decimal_tail(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
            self.advance();
        }
        self.scan_exponent();
    }

    fn scan_exponent(&mut self) {
        if self.peek().is_some_and(|c| c == 'e' || c == 'E') {
            let mut lookahead = 1;
            if self.peek_at(1).is_some_and(|c| c == '+' || c == '-') {
                lookahead = 2;
            }
            if self.peek_at(lookahead).is_some_and(|c| c.is_ascii_digit()) {
                for _ in 0..=lookahead {
                    self.advance();
                }
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                    self.advance();
                }
            }
        }
    }

    fn scan_slash(&mut self, start: usize, start_line: u32) -> Result<(), LexError> {
        if self.regex_allowed() {
            self.advance();
            let mut in_class = false;
            loop {
                match self.peek() {
                    None => return Err(LexError::UnterminatedRegex(start_line)),
                    Some(c) if is_line_terminator(c) => {
                        return Err(LexError::UnterminatedRegex(start_line));
                    }
                    Some('\\') => {
                        self.advance();
                        if self.advance().is_none() {
                            return Err(LexError::UnterminatedRegex(start_line));
                        }
                    }
                    Some('[') => {
                        in_class = true;
                        self.advance();
                    }
                    Some(']') => {
                        in_class = false;
                        self.advance();
                    }
                    Some('/') if !in_class => {
                        self.advance();
                        while self.peek().is_some_and(is_identifier_continue) {
                            self.advance();
                        }
                        self.emit(TokenKind::RegexLiteral, start, start_line);
                        return Ok(());
                    }
                    Some(_) => {
                        self.advance();
                    }
                }
            }
        } else {
            self.advance();
            if self.peek() == Some('=') {
                self.advance();
            }
            self.emit(TokenKind::Punctuator, start, start_line);
            Ok(())
        }
    }

    fn regex_allowed(&self) -> bool {
        match self.out.tokens.last() {
            None => true,
            Some(t) => match t.kind {
                TokenKind::Punctuator => REGEX_PUNCTUATORS.contains(&t.lexeme.as_str()),
                TokenKind::Identifier => REGEX_KEYWORDS.contains(&t.lexeme.as_str()),
                _ => false,
            },
        }
    }

    fn scan_punctuator(&mut self, ch: char) -> Result<(), LexError> {
        let start = self.pos;
        let start_line = self.line;
        let rest = self.rest();
        for p in PUNCTUATORS {
            if rest.starts_with(p) {
                // `?.` before a digit is `?` then a fractional number.
                let p = if *p == "?." && self.peek_at(2).is_some_and(|c| c.is_ascii_digit()) {
                    "?"
                } else {
                    p
                };
                if p == "{" {
                    if let Some(t) = self.ctx.last_mut() {
                        t.braces += 1;
                    }
                } else if p == "}" {
                    if let Some(t) = self.ctx.last_mut() {
                        t.braces -= 1;
                    }
                }
                for _ in 0..p.chars().count() {
                    self.advance();
                }
                self.emit(TokenKind::Punctuator, start, start_line);
                return Ok(());
            }
        }
        Err(LexError::UnexpectedChar { ch, line: self.line })
    }
}

fn is_line_terminator(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}')
}

fn is_js_whitespace(c: char) -> bool {
    c == '\u{FEFF}' || (c.is_whitespace() && !is_line_terminator(c))
}

fn is_identifier_start(c: char) -> bool {
    c == '_' || c == '$' || c == '#' || c.is_alphabetic()
}

fn is_identifier_continue(c: char) -> bool {
    c == '_' || c == '$' || c == '\u{200C}' || c == '\u{200D}' || c.is_alphanumeric()
}
