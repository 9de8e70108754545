use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::ast::CmpOp;
use super::error::{ErrorKind, MetricError, Pos};
use crate::date::{parse_iso, Date};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Date(Date),
    Op(CmpOp),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Date(d) => write!(f, "date @{d}"),
            Tok::Op(op) => write!(f, "`{}`", op.symbol()),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

struct Cursor<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    pos: Pos,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, mut keep: impl FnMut(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|c| keep(*c)) {
            s.push(c);
            self.bump();
        }
        s
    }
}

fn lexical(pos: Pos, message: String, expected: &[&str]) -> MetricError {
    MetricError {
        kind: ErrorKind::Lexical,
        pos,
        message,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn lex(text: &str) -> Result<Vec<Token>, MetricError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        pos: Pos { line: 1, col: 1 },
    };
    let mut out = Vec::new();
    loop {
        let pos = cur.pos;
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, pos });
            return Ok(out);
        };
        let tok = match c {
            c if c.is_whitespace() => {
                cur.bump();
                continue;
            }
            '#' => {
                cur.take_while(|c| c != '\n');
                continue;
            }
            '{' | '}' | '(' | ')' | ',' | ';' | ':' | '=' | '≠' | '≤' | '≥' => {
                cur.bump();
                match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '=' => Tok::Op(CmpOp::Eq),
                    '≠' => Tok::Op(CmpOp::Ne),
                    '≤' => Tok::Op(CmpOp::Le),
                    _ => Tok::Op(CmpOp::Ge),
                }
            }
            '!' => {
                cur.bump();
                if cur.peek() != Some('=') {
                    return Err(lexical(pos, "`!` must be followed by `=`".into(), &["!="]));
                }
                cur.bump();
                Tok::Op(CmpOp::Ne)
            }
            '<' | '>' => {
                cur.bump();
                match (c, cur.peek()) {
                    ('<', Some('=')) => {
                        cur.bump();
                        Tok::Op(CmpOp::Le)
                    }
                    ('<', Some('>')) => {
                        cur.bump();
                        Tok::Op(CmpOp::Ne)
                    }
                    ('>', Some('=')) => {
                        cur.bump();
                        Tok::Op(CmpOp::Ge)
                    }
                    ('<', _) => Tok::Op(CmpOp::Lt),
                    _ => Tok::Op(CmpOp::Gt),
                }
            }
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None | Some('\n') => {
                            return Err(lexical(pos, "unterminated string".into(), &["\""]))
                        }
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            other => {
                                let shown = other.map(|c| c.to_string()).unwrap_or_default();
                                return Err(lexical(
                                    pos,
                                    format!("unknown escape `\\{shown}`"),
                                    &["\\\"", "\\\\"],
                                ));
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            }
            '@' => {
                cur.bump();
                let raw = cur.take_while(|c| c.is_ascii_digit() || c == '-');
                match (raw.len(), parse_iso(&raw)) {
                    (10, Some(d)) => Tok::Date(d),
                    _ => {
                        return Err(lexical(
                            pos,
                            format!("invalid date literal `@{raw}`"),
                            &["@YYYY-MM-DD"],
                        ))
                    }
                }
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut raw = String::new();
                if c == '-' {
                    raw.push('-');
                    cur.bump();
                    if !cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                        return Err(lexical(pos, "`-` must start a number".into(), &["digit"]));
                    }
                }
                raw.push_str(&cur.take_while(|c| c.is_ascii_digit()));
                if cur.peek() == Some('.') {
                    cur.bump();
                    let frac = cur.take_while(|c| c.is_ascii_digit());
                    if frac.is_empty() {
                        return Err(lexical(
                            pos,
                            format!("number `{raw}.` has no fraction digits"),
                            &["digit"],
                        ));
                    }
                    raw.push('.');
                    raw.push_str(&frac);
                }
                Tok::Num(raw)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                Tok::Ident(cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
            }
            other => return Err(lexical(pos, format!("unexpected character `{other}`"), &[])),
        };
        out.push(Token { tok, pos });
    }
}
