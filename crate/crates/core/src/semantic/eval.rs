use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::ast::{Agg, CmpOp, Literal, Operand, Predicate};
use super::check::{Catalog, LineageTrace, Registry};
use crate::date::Date;
use crate::value::{FieldType, Value};

/// One row of a source, in canonical string form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub fields: BTreeMap<String, String>,
    pub source_id: String,
    pub config_version: String,
}

/// Supplies rows for sources, all as of one date.
pub trait MetricData {
    fn as_of(&self) -> Date;
    fn rows(&self, source: &str) -> Result<Vec<Row>, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("no data as of {as_of}; processed through {processed_through}")]
    MissingData {
        as_of: String,
        processed_through: String,
    },
    #[error("source `{name}`: {message}")]
    Source { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupValue {
    pub key: BTreeMap<String, String>,
    pub value: Option<Decimal>,
}

/// Value of a metric. Ungrained metrics carry `value`; grained ones `groups`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub as_of: Date,
    pub value: Option<Decimal>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub groups: Option<Vec<GroupValue>>,
    pub lineage: LineageTrace,
    pub definition_digest: String,
    /// Rows that passed visibility and the filter, summed over components.
    #[serde(skip)]
    pub rows_used: usize,
}

type Groups = BTreeMap<Vec<String>, Option<Decimal>>;

struct Partial {
    groups: Groups,
    sources: BTreeSet<String>,
    configs: BTreeSet<String>,
    rows_used: usize,
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Str(s) => Value::Str(s.clone()),
        Literal::Num(n) => Value::Num(*n),
        Literal::Date(d) => Value::Date(*d),
        Literal::Bool(b) => Value::Bool(*b),
    }
}

struct Typed<'a> {
    fields: &'a BTreeMap<String, FieldType>,
}

impl Typed<'_> {
    fn field(&self, row: &Row, name: &str) -> Value {
        let ty = self.fields.get(name).copied().unwrap_or(FieldType::Str);
        Value::from_canonical(row.fields.get(name).map(String::as_str), ty)
    }

    fn operand(&self, row: &Row, o: &Operand) -> Value {
        match o {
            Operand::Field(f) => self.field(row, &f.name),
            Operand::Lit(l) => literal_value(l),
        }
    }

    /// Three-valued: `None` is unknown, as with any comparison against null.
    fn test(&self, row: &Row, p: &Predicate) -> Option<bool> {
        match p {
            Predicate::Compare { left, op, right } => {
                let ord = self
                    .operand(row, left)
                    .partial_compare(&self.operand(row, right))?;
                Some(match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                })
            }
            Predicate::InList {
                operand,
                values,
                negated,
            } => {
                let v = self.operand(row, operand);
                if v.is_null() {
                    return None;
                }
                let found = values
                    .iter()
                    .any(|l| v.partial_compare(&literal_value(l)) == Some(Ordering::Equal));
                Some(found != *negated)
            }
            Predicate::And(a, b) => match (self.test(row, a), self.test(row, b)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Predicate::Or(a, b) => match (self.test(row, a), self.test(row, b)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Predicate::Not(p) => self.test(row, p).map(|b| !b),
            Predicate::Truthy(f) => match self.field(row, &f.name) {
                Value::Bool(b) => Some(b),
                _ => None,
            },
            Predicate::Const(b) => Some(*b),
        }
    }
}

fn evaluate_partial(
    registry: &Registry,
    catalog: &Catalog,
    name: &str,
    data: &dyn MetricData,
    visible: &dyn Fn(&str, &Row) -> bool,
) -> Result<Partial, EvalError> {
    let m = registry
        .get(name)
        .ok_or_else(|| EvalError::UnknownMetric(name.to_string()))?;
    if let Agg::Ratio(a, b) = &m.def.agg {
        let num = evaluate_partial(registry, catalog, &a.name, data, visible)?;
        let den = evaluate_partial(registry, catalog, &b.name, data, visible)?;
        let mut keys: BTreeSet<&Vec<String>> = num.groups.keys().collect();
        keys.extend(den.groups.keys());
        if m.grain.is_empty() {
            keys.insert(&EMPTY_KEY);
        }
        let component =
            |g: &Groups, k: &Vec<String>| g.get(k).copied().unwrap_or(Some(Decimal::ZERO));
        let groups = keys
            .into_iter()
            .map(|k| {
                let value = match (component(&num.groups, k), component(&den.groups, k)) {
                    (Some(n), Some(d)) if !d.is_zero() => {
                        n.checked_div(d).map(|q| q.round_dp(12).normalize())
                    }
                    _ => None,
                };
                (k.clone(), value)
            })
            .collect();
        let mut sources = num.sources;
        sources.extend(den.sources);
        let mut configs = num.configs;
        configs.extend(den.configs);
        return Ok(Partial {
            groups,
            sources,
            configs,
            rows_used: num.rows_used + den.rows_used,
        });
    }
    let source = m
        .def
        .source
        .as_ref()
        .map(|s| s.name.as_str())
        .unwrap_or_default();
    let fields = catalog.source(source).ok_or_else(|| EvalError::Source {
        name: source.to_string(),
        message: "not in catalog".into(),
    })?;
    let typed = Typed { fields };
    let rows = data.rows(source)?;
    let grain = &m.grain;
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut distinct: BTreeMap<Vec<String>, BTreeSet<String>> = BTreeMap::new();
    let mut sums: BTreeMap<Vec<String>, Decimal> = BTreeMap::new();
    let (mut sources, mut configs) = (BTreeSet::new(), BTreeSet::new());
    let mut rows_used = 0;
    for row in &rows {
        if !visible(source, row) {
            continue;
        }
        if let Some(p) = &m.def.filter {
            if typed.test(row, p) != Some(true) {
                continue;
            }
        }
        rows_used += 1;
        sources.insert(row.source_id.clone());
        configs.insert(row.config_version.clone());
        let key: Vec<String> = grain
            .iter()
            .map(|g| typed.field(row, g).group_key())
            .collect();
        *counts.entry(key.clone()).or_default() += 1;
        match &m.def.agg {
            Agg::CountDistinct(f) => {
                let set = distinct.entry(key).or_default();
                let v = typed.field(row, &f.name);
                if !v.is_null() {
                    set.insert(v.group_key());
                }
            }
            Agg::Sum(f) => {
                let total = sums.entry(key).or_default();
                if let Value::Num(n) = typed.field(row, &f.name) {
                    *total += n;
                }
            }
            _ => {}
        }
    }
    if grain.is_empty() {
        counts.entry(Vec::new()).or_default();
    }
    let groups = counts
        .into_iter()
        .map(|(k, n)| {
            let value = match &m.def.agg {
                Agg::CountDistinct(_) => Decimal::from(distinct.get(&k).map_or(0, BTreeSet::len)),
                Agg::Sum(_) => sums.get(&k).copied().unwrap_or_default().normalize(),
                _ => Decimal::from(n),
            };
            (k, Some(value))
        })
        .collect();
    Ok(Partial {
        groups,
        sources,
        configs,
        rows_used,
    })
}

static EMPTY_KEY: Vec<String> = Vec::new();

/// Evaluates `name` over the rows `visible` admits.
pub fn evaluate(
    registry: &Registry,
    catalog: &Catalog,
    name: &str,
    data: &dyn MetricData,
    visible: &dyn Fn(&str, &Row) -> bool,
) -> Result<MetricResult, EvalError> {
    let m = registry
        .get(name)
        .ok_or_else(|| EvalError::UnknownMetric(name.to_string()))?;
    let partial = evaluate_partial(registry, catalog, name, data, visible)?;
    let mut lineage = m.lineage.clone();
    lineage.source_systems = partial.sources;
    lineage.config_versions = partial.configs;
    let (value, groups) = if m.grain.is_empty() {
        (partial.groups.get(&EMPTY_KEY).copied().flatten(), None)
    } else {
        let groups = partial
            .groups
            .into_iter()
            .map(|(k, value)| GroupValue {
                key: m.grain.iter().cloned().zip(k).collect(),
                value,
            })
            .collect();
        (None, Some(groups))
    };
    Ok(MetricResult {
        metric: name.to_string(),
        as_of: data.as_of(),
        value,
        groups,
        lineage,
        definition_digest: m.digest.clone(),
        rows_used: partial.rows_used,
    })
}
