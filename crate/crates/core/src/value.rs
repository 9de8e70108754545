//! Field types and typed values.
//!
//! Staged records keep every field as a canonical string (ISO dates,
//! normalized decimals, `true`/`false`). Typed [`Value`]s are rebuilt from
//! those strings against a schema wherever arithmetic or comparison is
//! needed.

use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::date::{parse_iso, Date};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    Str,
    Number,
    Integer,
    Date,
    Bool,
}

impl FieldType {
    pub fn is_numeric(self) -> bool {
        matches!(self, FieldType::Number | FieldType::Integer)
    }

    /// Whether values of the two types can be compared with each other.
    pub fn comparable_with(self, other: FieldType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldType::Str => "string",
            FieldType::Number => "number",
            FieldType::Integer => "integer",
            FieldType::Date => "date",
            FieldType::Bool => "bool",
        }
    }

    /// Converts a raw value into its canonical string form, or `None` when it
    /// does not fit the type.
    pub fn canonicalize(self, raw: &str) -> Option<String> {
        let raw = raw.trim();
        match self {
            FieldType::Str => Some(raw.to_string()),
            FieldType::Number => Decimal::from_str(raw)
                .ok()
                .map(|d| d.normalize().to_string()),
            FieldType::Integer => raw.parse::<i64>().ok().map(|i| i.to_string()),
            FieldType::Date => parse_iso(raw).map(|d| d.to_string()),
            FieldType::Bool => match raw.to_ascii_lowercase().as_str() {
                "true" | "t" | "yes" | "y" | "1" => Some("true".to_string()),
                "false" | "f" | "no" | "n" | "0" => Some("false".to_string()),
                _ => None,
            },
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Bool(bool),
    Num(Decimal),
    Str(String),
    Date(Date),
}

impl Value {
    /// Rebuilds a typed value from its canonical string; malformed input
    /// becomes `Null`.
    pub fn from_canonical(raw: Option<&str>, ty: FieldType) -> Value {
        let Some(raw) = raw else { return Value::Null };
        match ty {
            FieldType::Str => Value::Str(raw.to_string()),
            FieldType::Number | FieldType::Integer => Decimal::from_str(raw)
                .map(Value::Num)
                .unwrap_or(Value::Null),
            FieldType::Date => parse_iso(raw).map(Value::Date).unwrap_or(Value::Null),
            FieldType::Bool => match raw {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => Value::Null,
            },
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Ordering between values of the same kind; `None` for nulls or kind
    /// mismatches.
    pub fn partial_compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (Value::Num(a), Value::Num(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// Key used for distinct counting and grouping.
    pub fn group_key(&self) -> String {
        match self {
            Value::Null => "null".to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => n.normalize().to_string(),
            Value::Str(s) => s.clone(),
            Value::Date(d) => d.to_string(),
        }
    }
}
