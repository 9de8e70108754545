//! Metric definition language: parsing, checking, registry and evaluation.

mod ast;
mod check;
mod error;
mod eval;
mod lexer;
mod parser;

pub use ast::{Agg, CmpOp, Ident, Literal, MetricDefinition, Operand, Predicate};
pub use check::{
    check_definition, Catalog, CheckError, LineageTrace, RegisteredMetric, Registry, RegistryError,
};
pub use error::{ErrorKind, MetricError, Pos};
pub use eval::{evaluate, EvalError, GroupValue, MetricData, MetricResult, Row};
pub use lexer::{lex, Tok, Token};
pub use parser::{parse_metric, parse_metrics, parse_predicate};
