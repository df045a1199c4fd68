//! Tokenizer. Quantities such as `100Mb/s`, `6B` or `125us` are single tokens.

use crate::diag::{Diagnostic, Pos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    /// Number with a unit suffix, kept verbatim.
    Quantity(String),
    /// Body of a triple-backtick fence, verbatim.
    Fenced(String),
    LBrace,
    RBrace,
    Semi,
    Comma,
    Colon,
    Dot,
    Bidir,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Quantity(q) => format!("`{q}`"),
            Tok::Fenced(_) => "fenced text".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Bidir => "`<-->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    rest: &'a str,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest.starts_with(s)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        self.rest = &self.rest[c.len_utf8()..];
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `text` into tokens. Lexical errors are reported and the offending
/// character skipped.
pub fn lex(text: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut cur = Cursor { chars: text.chars().peekable(), rest: text, line: 1, col: 1 };
    let mut out = Vec::new();
    let mut diags = Vec::new();

    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            while cur.peek().is_some_and(|c| c != '\n') {
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    diags.push(Diagnostic::error(pos, "unterminated block comment"));
                    break;
                }
            }
            continue;
        }
        if cur.starts_with("```") {
            for _ in 0..3 {
                cur.bump();
            }
            let mut body = String::new();
            loop {
                if cur.starts_with("```") {
                    for _ in 0..3 {
                        cur.bump();
                    }
                    break;
                }
                match cur.bump() {
                    Some(ch) => body.push(ch),
                    None => {
                        diags.push(Diagnostic::error(pos, "unterminated ``` fence"));
                        break;
                    }
                }
            }
            out.push(Token { tok: Tok::Fenced(body), pos });
            continue;
        }
        if cur.starts_with("<-->") {
            for _ in 0..4 {
                cur.bump();
            }
            out.push(Token { tok: Tok::Bidir, pos });
            continue;
        }
        let simple = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '.' => Some(Tok::Dot),
            _ => None,
        };
        if let Some(tok) = simple {
            cur.bump();
            out.push(Token { tok, pos });
            continue;
        }
        let signed = (c == '-' || c == '+') && {
            let mut it = cur.rest.chars();
            it.next();
            it.next().is_some_and(|d| d.is_ascii_digit())
        };
        if c.is_ascii_digit() || signed {
            let mut text = String::new();
            if signed {
                text.push(cur.bump().expect("sign"));
            }
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                text.push(cur.bump().expect("digit"));
            }
            let mut has_frac = false;
            if cur.peek() == Some('.') && cur.rest[1..].starts_with(|c: char| c.is_ascii_digit()) {
                has_frac = true;
                text.push(cur.bump().expect("dot"));
                while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                    text.push(cur.bump().expect("digit"));
                }
            }
            let mut unit = String::new();
            while cur.peek().is_some_and(|c| c.is_alphabetic() || c == 'µ') {
                unit.push(cur.bump().expect("unit"));
            }
            if !unit.is_empty() && cur.peek() == Some('/') {
                unit.push(cur.bump().expect("slash"));
                while cur.peek().is_some_and(|c| c.is_alphabetic()) {
                    unit.push(cur.bump().expect("unit"));
                }
            }
            if unit.is_empty() && !has_frac {
                match text.parse::<i64>() {
                    Ok(v) => out.push(Token { tok: Tok::Int(v), pos }),
                    Err(_) => diags.push(Diagnostic::error(pos, format!("integer `{text}` out of range"))),
                }
            } else {
                out.push(Token { tok: Tok::Quantity(format!("{text}{unit}")), pos });
            }
            continue;
        }
        if is_ident_start(c) {
            let mut name = String::new();
            while cur.peek().is_some_and(is_ident_char) {
                name.push(cur.bump().expect("ident"));
            }
            out.push(Token { tok: Tok::Ident(name), pos });
            continue;
        }
        cur.bump();
        diags.push(Diagnostic::error(pos, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::Eof, pos: cur.pos() });
    (out, diags)
}
