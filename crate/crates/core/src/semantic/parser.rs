use alloc::boxed::Box;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rust_decimal::Decimal;

use super::ast::{Agg, Ident, Literal, MetricDefinition, Operand, Predicate};
use super::error::{ErrorKind, MetricError, Pos};
use super::lexer::{lex, Tok, Token};

const RESERVED: &[&str] = &["and", "or", "not", "in", "true", "false"];

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> MetricError {
        let t = self.peek();
        MetricError {
            kind: ErrorKind::Syntax,
            pos: t.pos,
            message: format!("unexpected {}", t.tok),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w == word)
    }

    fn word(&mut self, word: &str) -> Result<Pos, MetricError> {
        if self.is_word(word) {
            Ok(self.next().pos)
        } else {
            Err(self.error(&[word]))
        }
    }

    fn punct(&mut self, tok: Tok, shown: &str) -> Result<(), MetricError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(&[shown]))
        }
    }

    fn ident(&mut self) -> Result<Ident, MetricError> {
        match &self.peek().tok {
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => {
                let t = self.next();
                let Tok::Ident(name) = t.tok else {
                    unreachable!()
                };
                Ok(Ident { name, pos: t.pos })
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn metric(&mut self) -> Result<MetricDefinition, MetricError> {
        self.word("metric")?;
        let name = self.ident()?;
        self.punct(Tok::LBrace, "{")?;
        let mut source = None;
        let mut filter = None;
        let mut agg = None;
        let mut grain = None;
        loop {
            if self.peek().tok == Tok::RBrace {
                break;
            }
            let item = self.peek().clone();
            let key = match &item.tok {
                Tok::Ident(w) if ["source", "filter", "agg", "grain"].contains(&w.as_str()) => {
                    w.clone()
                }
                _ => return Err(self.error(&["source", "filter", "agg", "grain", "}"])),
            };
            self.next();
            let duplicate = match key.as_str() {
                "source" => source.is_some(),
                "filter" => filter.is_some(),
                "agg" => agg.is_some(),
                _ => grain.is_some(),
            };
            if duplicate {
                return Err(MetricError {
                    kind: ErrorKind::Syntax,
                    pos: item.pos,
                    message: format!("`{key}` given twice"),
                    expected: vec![],
                });
            }
            self.punct(Tok::Colon, ":")?;
            match key.as_str() {
                "source" => source = Some(self.ident()?),
                "filter" => filter = Some(self.predicate()?),
                "agg" => agg = Some(self.agg()?),
                _ => {
                    let mut fields = vec![self.ident()?];
                    while self.peek().tok == Tok::Comma {
                        self.next();
                        fields.push(self.ident()?);
                    }
                    grain = Some(fields);
                }
            }
            match self.peek().tok {
                Tok::Semi => {
                    self.next();
                }
                Tok::RBrace => break,
                _ => return Err(self.error(&[";", "}"])),
            }
        }
        let close = self.peek().pos;
        self.punct(Tok::RBrace, "}")?;
        let agg = agg.ok_or_else(|| MetricError {
            kind: ErrorKind::Syntax,
            pos: close,
            message: format!("metric `{}` has no `agg`", name.name),
            expected: vec!["agg".into()],
        })?;
        if source.is_none() && !matches!(agg, Agg::Ratio(..)) {
            return Err(MetricError {
                kind: ErrorKind::Syntax,
                pos: close,
                message: format!("metric `{}` has no `source`", name.name),
                expected: vec!["source".into()],
            });
        }
        Ok(MetricDefinition {
            name,
            source,
            filter,
            agg,
            grain: grain.unwrap_or_default(),
        })
    }

    fn agg(&mut self) -> Result<Agg, MetricError> {
        let which = match &self.peek().tok {
            Tok::Ident(w) if ["count", "count_distinct", "sum", "ratio"].contains(&w.as_str()) => {
                w.clone()
            }
            _ => return Err(self.error(&["count", "count_distinct", "sum", "ratio"])),
        };
        self.next();
        if which == "count" {
            return Ok(Agg::Count);
        }
        self.punct(Tok::LParen, "(")?;
        let first = self.ident()?;
        let agg = match which.as_str() {
            "count_distinct" => Agg::CountDistinct(first),
            "sum" => Agg::Sum(first),
            _ => {
                self.punct(Tok::Comma, ",")?;
                Agg::Ratio(first, self.ident()?)
            }
        };
        self.punct(Tok::RParen, ")")?;
        Ok(agg)
    }

    fn predicate(&mut self) -> Result<Predicate, MetricError> {
        let mut left = self.conjunction()?;
        while self.is_word("or") {
            self.next();
            left = Predicate::Or(Box::new(left), Box::new(self.conjunction()?));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Predicate, MetricError> {
        let mut left = self.negation()?;
        while self.is_word("and") {
            self.next();
            left = Predicate::And(Box::new(left), Box::new(self.negation()?));
        }
        Ok(left)
    }

    fn negation(&mut self) -> Result<Predicate, MetricError> {
        if self.is_word("not") {
            self.next();
            return Ok(Predicate::Not(Box::new(self.negation()?)));
        }
        self.primary()
    }

    fn literal(&mut self) -> Result<Literal, MetricError> {
        let t = self.peek().clone();
        let lit = match t.tok {
            Tok::Str(s) => Literal::Str(s),
            Tok::Date(d) => Literal::Date(d),
            Tok::Num(n) => Literal::Num(Decimal::from_str(&n).map_err(|_| MetricError {
                kind: ErrorKind::Lexical,
                pos: t.pos,
                message: format!("number `{n}` is out of range"),
                expected: vec![],
            })?),
            Tok::Ident(w) if w == "true" || w == "false" => Literal::Bool(w == "true"),
            _ => return Err(self.error(&["string", "number", "date", "true", "false"])),
        };
        self.next();
        Ok(lit)
    }

    fn operand(&mut self) -> Result<Operand, MetricError> {
        match &self.peek().tok {
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => Ok(Operand::Field(self.ident()?)),
            Tok::Str(_) | Tok::Num(_) | Tok::Date(_) => Ok(Operand::Lit(self.literal()?)),
            Tok::Ident(w) if w == "true" || w == "false" => Ok(Operand::Lit(self.literal()?)),
            _ => Err(self.error(&["(", "not", "identifier", "literal"])),
        }
    }

    fn primary(&mut self) -> Result<Predicate, MetricError> {
        if self.peek().tok == Tok::LParen {
            self.next();
            let inner = self.predicate()?;
            self.punct(Tok::RParen, ")")?;
            return Ok(inner);
        }
        let operand = self.operand()?;
        if let Tok::Op(op) = self.peek().tok {
            self.next();
            let right = self.operand()?;
            return Ok(Predicate::Compare {
                left: operand,
                op,
                right,
            });
        }
        let negated = self.is_word("not")
            && matches!(self.tokens.get(self.at + 1).map(|t| &t.tok), Some(Tok::Ident(w)) if w == "in");
        if negated || self.is_word("in") {
            if negated {
                self.next();
            }
            self.next();
            self.punct(Tok::LParen, "(")?;
            let mut values = vec![self.literal()?];
            while self.peek().tok == Tok::Comma {
                self.next();
                values.push(self.literal()?);
            }
            self.punct(Tok::RParen, ")")?;
            return Ok(Predicate::InList {
                operand,
                values,
                negated,
            });
        }
        match operand {
            Operand::Field(f) => Ok(Predicate::Truthy(f)),
            Operand::Lit(Literal::Bool(b)) => Ok(Predicate::Const(b)),
            Operand::Lit(_) => Err(self.error(&["comparison operator", "in"])),
        }
    }
}

/// Parses every metric block in `text`.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricDefinition>, MetricError> {
    let mut p = Parser {
        tokens: lex(text)?,
        at: 0,
    };
    let mut out = Vec::new();
    while p.peek().tok != Tok::Eof {
        out.push(p.metric()?);
    }
    Ok(out)
}

/// Parses exactly one metric block.
pub fn parse_metric(text: &str) -> Result<MetricDefinition, MetricError> {
    let mut p = Parser {
        tokens: lex(text)?,
        at: 0,
    };
    let def = p.metric()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error(&["end of input"]));
    }
    Ok(def)
}

/// Parses a standalone predicate (used by tests and the CLI).
pub fn parse_predicate(text: &str) -> Result<Predicate, MetricError> {
    let mut p = Parser {
        tokens: lex(text)?,
        at: 0,
    };
    let pred = p.predicate()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error(&["and", "or", "end of input"]));
    }
    Ok(pred)
}
