use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{ConfigError, StagedRecord};
use crate::entity::EntityKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    NotNull {
        entity_kind: EntityKind,
        field: String,
    },
    AcceptedValues {
        entity_kind: EntityKind,
        field: String,
        values: BTreeSet<String>,
    },
    AcceptedRange {
        entity_kind: EntityKind,
        field: String,
        min: Decimal,
        max: Decimal,
    },
    Referential {
        entity_kind: EntityKind,
        field: String,
        target_kind: EntityKind,
        target_field: String,
    },
}

impl Assertion {
    pub fn entity_kind(&self) -> EntityKind {
        match self {
            Assertion::NotNull { entity_kind, .. }
            | Assertion::AcceptedValues { entity_kind, .. }
            | Assertion::AcceptedRange { entity_kind, .. }
            | Assertion::Referential { entity_kind, .. } => *entity_kind,
        }
    }

    pub fn field(&self) -> &str {
        match self {
            Assertion::NotNull { field, .. }
            | Assertion::AcceptedValues { field, .. }
            | Assertion::AcceptedRange { field, .. }
            | Assertion::Referential { field, .. } => field,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Assertion::NotNull { .. } => "not_null",
            Assertion::AcceptedValues { .. } => "accepted_values",
            Assertion::AcceptedRange { .. } => "accepted_range",
            Assertion::Referential { .. } => "referential",
        }
    }

    /// Label used in quality reports, e.g. `not_null(invoice_line.subscriber_id)`.
    pub fn label(&self) -> String {
        format!(
            "{}({}.{})",
            self.kind_name(),
            self.entity_kind(),
            self.field()
        )
    }

    /// Null-tolerant except for `not_null`; missing values are that
    /// assertion's concern.
    fn holds(&self, record: &StagedRecord, reference: &ReferenceIndex) -> bool {
        let value = record.get(self.field()).filter(|v| !v.is_empty());
        match (self, value) {
            (Assertion::NotNull { .. }, v) => v.is_some(),
            (_, None) => true,
            (Assertion::AcceptedValues { values, .. }, Some(v)) => values.contains(v),
            (Assertion::AcceptedRange { min, max, .. }, Some(v)) => Decimal::from_str(v)
                .map(|d| *min <= d && d <= *max)
                .unwrap_or(false),
            (
                Assertion::Referential {
                    target_kind,
                    target_field,
                    ..
                },
                Some(v),
            ) => reference.contains(*target_kind, target_field, v),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityAssertionSet {
    pub assertions: Vec<Assertion>,
}

impl QualityAssertionSet {
    /// Parses and checks every referenced field against `field_exists`.
    pub fn from_json(
        text: &str,
        field_exists: impl Fn(EntityKind, &str) -> bool,
    ) -> Result<Self, ConfigError> {
        let set: QualityAssertionSet =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        for assertion in &set.assertions {
            if !field_exists(assertion.entity_kind(), assertion.field()) {
                return Err(ConfigError::Invalid(format!(
                    "{}: unknown field",
                    assertion.label()
                )));
            }
            if let Assertion::Referential {
                target_kind,
                target_field,
                ..
            } = assertion
            {
                if !field_exists(*target_kind, target_field) {
                    return Err(ConfigError::Invalid(format!(
                        "{}: unknown target {target_kind}.{target_field}",
                        assertion.label()
                    )));
                }
            }
            if let Assertion::AcceptedRange { min, max, .. } = assertion {
                if min > max {
                    return Err(ConfigError::Invalid(format!(
                        "{}: min > max",
                        assertion.label()
                    )));
                }
            }
        }
        Ok(set)
    }

    /// `(entity, field)` pairs that referential assertions look up.
    pub fn referential_targets(&self) -> BTreeSet<(EntityKind, String)> {
        self.assertions
            .iter()
            .filter_map(|a| match a {
                Assertion::Referential {
                    target_kind,
                    target_field,
                    ..
                } => Some((*target_kind, target_field.clone())),
                _ => None,
            })
            .collect()
    }
}

/// Values of referenced fields among passing staged records.
#[derive(Debug, Clone, Default)]
pub struct ReferenceIndex {
    values: BTreeMap<(EntityKind, String), BTreeSet<String>>,
}

impl ReferenceIndex {
    pub fn for_targets(targets: &BTreeSet<(EntityKind, String)>) -> Self {
        ReferenceIndex {
            values: targets
                .iter()
                .map(|t| (t.clone(), BTreeSet::new()))
                .collect(),
        }
    }

    pub fn add<'a>(&mut self, records: impl IntoIterator<Item = &'a StagedRecord>) {
        for record in records.into_iter().filter(|r| r.is_pass()) {
            for ((kind, field), set) in self.values.iter_mut() {
                if *kind == record.entity_kind {
                    if let Some(v) = record.get(field) {
                        set.insert(v.to_string());
                    }
                }
            }
        }
    }

    pub fn contains(&self, kind: EntityKind, field: &str, value: &str) -> bool {
        self.values
            .get(&(kind, field.to_string()))
            .is_some_and(|s| s.contains(value))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub evaluated: usize,
    pub passed: usize,
    pub quarantined: usize,
    pub failures: BTreeMap<String, usize>,
}

/// Applies every assertion to the records still passing. The first failing
/// assertion quarantines the record as `<kind>:<field>`.
pub fn apply_assertions(
    batch: &mut [StagedRecord],
    set: &QualityAssertionSet,
    reference: &ReferenceIndex,
) -> QualityReport {
    let mut report = QualityReport {
        evaluated: batch.len(),
        ..QualityReport::default()
    };
    for record in batch.iter_mut() {
        if record.is_pass() {
            let failed = set
                .assertions
                .iter()
                .filter(|a| a.entity_kind() == record.entity_kind)
                .find(|a| !a.holds(record, reference));
            if let Some(assertion) = failed {
                *report.failures.entry(assertion.label()).or_default() += 1;
                record.quarantine(format!("{}:{}", assertion.kind_name(), assertion.field()));
            }
        }
        if record.is_pass() {
            report.passed += 1;
        } else {
            report.quarantined += 1;
        }
    }
    report
}
