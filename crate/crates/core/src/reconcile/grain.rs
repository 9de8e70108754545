use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::entity::EntityKind;
use crate::staging::{ConfigError, StagedRecord};

/// Natural-key values of a record joined with `|`.
pub fn natural_key(record: &StagedRecord) -> String {
    let parts: Vec<&str> = record
        .entity_kind
        .natural_key()
        .iter()
        .map(|f| record.get(f).unwrap_or(""))
        .collect();
    parts.join("|")
}

/// First-seen-wins dedup on natural keys, across every call.
#[derive(Debug, Clone, Default)]
pub struct Deduper {
    seen: BTreeMap<EntityKind, BTreeMap<String, String>>,
}

impl Deduper {
    /// `Err(kept_lineage)` when the record's natural key was already admitted.
    pub fn admit(&mut self, record: &StagedRecord) -> Result<(), String> {
        let keys = self.seen.entry(record.entity_kind).or_default();
        let key = natural_key(record);
        match keys.get(&key) {
            Some(kept) => Err(kept.clone()),
            None => {
                keys.insert(key, record.lineage_id.clone());
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measure {
    pub name: String,
    pub agg: Aggregation,
    /// Required for `sum`; nulls are skipped.
    #[serde(default)]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrainSpec {
    pub entity_kind: EntityKind,
    pub grain: Vec<String>,
    pub measures: Vec<Measure>,
}

impl GrainSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for field in &self.grain {
            if self.entity_kind.field_type(field).is_none() {
                return Err(ConfigError::Invalid(format!(
                    "grain field {}.{field} is unknown",
                    self.entity_kind
                )));
            }
        }
        for m in &self.measures {
            match (m.agg, &m.field) {
                (Aggregation::Count, _) => {}
                (Aggregation::Sum, Some(f))
                    if self
                        .entity_kind
                        .field_type(f)
                        .is_some_and(|t| t.is_numeric()) => {}
                _ => {
                    return Err(ConfigError::Invalid(format!(
                        "measure `{}` needs a numeric field",
                        m.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrainRow {
    pub key: Vec<String>,
    pub measures: BTreeMap<String, Decimal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDuplicate {
    pub kept: String,
    pub dropped: String,
    pub natural_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregated {
    pub rows: Vec<GrainRow>,
    pub duplicates: Vec<DroppedDuplicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrainError {
    #[error("grain is not unique; repeated keys: {}", .0.iter().map(|k| k.join("|")).collect::<Vec<_>>().join(", "))]
    NotUnique(Vec<Vec<String>>),
    #[error("grains differ in width: {0} vs {1}")]
    Width(usize, usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Drops natural-key duplicates (records are taken in ingest order) and
/// sums measures to the grain. Output rows are in key order.
pub fn dedup_and_aggregate(
    records: &[StagedRecord],
    spec: &GrainSpec,
) -> Result<Aggregated, GrainError> {
    spec.validate()?;
    let mut dedup = Deduper::default();
    let mut duplicates = Vec::new();
    let mut groups: BTreeMap<Vec<String>, BTreeMap<String, Decimal>> = BTreeMap::new();
    for record in records
        .iter()
        .filter(|r| r.is_pass() && r.entity_kind == spec.entity_kind)
    {
        if let Err(kept) = dedup.admit(record) {
            duplicates.push(DroppedDuplicate {
                kept,
                dropped: record.lineage_id.clone(),
                natural_key: natural_key(record),
            });
            continue;
        }
        let key: Vec<String> = spec
            .grain
            .iter()
            .map(|f| record.get(f).unwrap_or("").to_string())
            .collect();
        let measures = groups.entry(key).or_default();
        for m in &spec.measures {
            let add = match (m.agg, &m.field) {
                (Aggregation::Count, _) => Decimal::ONE,
                (Aggregation::Sum, Some(f)) => record
                    .get(f)
                    .and_then(|v| Decimal::from_str(v).ok())
                    .unwrap_or(Decimal::ZERO),
                (Aggregation::Sum, None) => unreachable!("validated"),
            };
            *measures.entry(m.name.clone()).or_insert(Decimal::ZERO) += add;
        }
    }
    let rows: Vec<GrainRow> = groups
        .into_iter()
        .map(|(key, measures)| GrainRow { key, measures })
        .collect();
    ensure_unique(&rows)?;
    Ok(Aggregated { rows, duplicates })
}

pub fn ensure_unique(rows: &[GrainRow]) -> Result<(), GrainError> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    for row in rows {
        *counts.entry(&row.key).or_default() += 1;
    }
    let repeated: Vec<Vec<String>> = counts
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(k, _)| k.to_vec())
        .collect();
    if repeated.is_empty() {
        Ok(())
    } else {
        Err(GrainError::NotUnique(repeated))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinedRow {
    pub key: Vec<String>,
    pub left: BTreeMap<String, Decimal>,
    pub right: Option<BTreeMap<String, Decimal>>,
}

/// Left join of two pre-aggregated inputs on the full grain key. Both sides
/// must already be unique at the grain, so output cardinality equals the
/// left input.
pub fn join_at_grain(left: &[GrainRow], right: &[GrainRow]) -> Result<Vec<JoinedRow>, GrainError> {
    ensure_unique(left)?;
    ensure_unique(right)?;
    if let (Some(l), Some(r)) = (left.first(), right.first()) {
        if l.key.len() != r.key.len() {
            return Err(GrainError::Width(l.key.len(), r.key.len()));
        }
    }
    let index: BTreeMap<&[String], &GrainRow> =
        right.iter().map(|r| (r.key.as_slice(), r)).collect();
    Ok(left
        .iter()
        .map(|l| JoinedRow {
            key: l.key.clone(),
            left: l.measures.clone(),
            right: index.get(l.key.as_slice()).map(|r| r.measures.clone()),
        })
        .collect())
}
