use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rust_decimal::Decimal;

use super::error::Pos;
use crate::date::Date;
use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

/// Identifier with its source position; equality ignores the position.
#[derive(Debug, Clone, Eq)]
pub struct Ident {
    pub name: String,
    pub pos: Pos,
}

impl Ident {
    pub fn new(name: &str) -> Ident {
        Ident {
            name: name.into(),
            pos: Pos::default(),
        }
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Str(String),
    Num(Decimal),
    Date(Date),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Field(Ident),
    Lit(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Compare {
        left: Operand,
        op: CmpOp,
        right: Operand,
    },
    InList {
        operand: Operand,
        values: Vec<Literal>,
        negated: bool,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
    /// A bare boolean field.
    Truthy(Ident),
    Const(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Agg {
    Count,
    CountDistinct(Ident),
    Sum(Ident),
    /// Numerator and denominator metric names.
    Ratio(Ident, Ident),
}

#[derive(Debug, Clone, Eq)]
pub struct MetricDefinition {
    pub name: Ident,
    /// Absent only for ratios.
    pub source: Option<Ident>,
    pub filter: Option<Predicate>,
    pub agg: Agg,
    pub grain: Vec<Ident>,
}

impl PartialEq for MetricDefinition {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.source == other.source
            && self.filter == other.filter
            && self.agg == other.agg
            && self.grain == other.grain
    }
}

impl MetricDefinition {
    /// Digest of the canonical printed form, so layout and comments do not
    /// change a version.
    pub fn version(&self) -> String {
        sha256_hex(self.to_string().as_bytes())
    }

    pub fn grain_names(&self) -> Vec<&str> {
        self.grain.iter().map(|g| g.name.as_str()).collect()
    }
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write_str_lit(f, s),
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Date(d) => write!(f, "@{d}"),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Field(i) => f.write_str(&i.name),
            Operand::Lit(l) => write!(f, "{l}"),
        }
    }
}

struct Grouped<'a>(&'a Predicate);

impl fmt::Display for Grouped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            p @ (Predicate::And(..) | Predicate::Or(..)) => write!(f, "({p})"),
            p => write!(f, "{p}"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { left, op, right } => write!(f, "{left} {} {right}", op.symbol()),
            Predicate::InList {
                operand,
                values,
                negated,
            } => {
                write!(f, "{operand} {}in (", if *negated { "not " } else { "" })?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
            Predicate::And(a, b) => write!(f, "{} and {}", Grouped(a), Grouped(b)),
            Predicate::Or(a, b) => write!(f, "{} or {}", Grouped(a), Grouped(b)),
            Predicate::Not(p) => write!(f, "not {}", Grouped(p)),
            Predicate::Truthy(i) => f.write_str(&i.name),
            Predicate::Const(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Agg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agg::Count => f.write_str("count"),
            Agg::CountDistinct(i) => write!(f, "count_distinct({})", i.name),
            Agg::Sum(i) => write!(f, "sum({})", i.name),
            Agg::Ratio(a, b) => write!(f, "ratio({}, {})", a.name, b.name),
        }
    }
}

/// Canonical form: fixed item order, one item per line.
impl fmt::Display for MetricDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric {} {{", self.name.name)?;
        if let Some(s) = &self.source {
            writeln!(f, "  source: {};", s.name)?;
        }
        if let Some(p) = &self.filter {
            writeln!(f, "  filter: {p};")?;
        }
        writeln!(f, "  agg: {};", self.agg)?;
        if !self.grain.is_empty() {
            let names: Vec<&str> = self.grain_names();
            writeln!(f, "  grain: {};", names.join(", "))?;
        }
        writeln!(f, "}}")
    }
}
