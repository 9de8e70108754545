use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::entity::EntityKind;
use crate::ingest::Payload;
use crate::value::FieldType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    /// Only checked for numeric and boolean columns; raw dates and strings
    /// carry no shape worth enforcing before normalization.
    #[serde(rename = "type", default = "default_type")]
    pub ty: FieldType,
    #[serde(default)]
    pub required: bool,
}

fn default_type() -> FieldType {
    FieldType::Str
}

/// Expected raw columns for one `(source_id, entity_kind)` feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSchema {
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaRegistry {
    /// Keyed by `source_id/entity_kind`.
    pub feeds: BTreeMap<String, ExpectedSchema>,
}

impl SchemaRegistry {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let registry: SchemaRegistry =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        for (key, schema) in &registry.feeds {
            let kind = key.split_once('/').map(|(_, k)| k).ok_or_else(|| {
                ConfigError::Invalid(format!("schema key `{key}` is not source/entity_kind"))
            })?;
            kind.parse::<EntityKind>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let mut seen = alloc::collections::BTreeSet::new();
            for column in &schema.columns {
                if !seen.insert(column.name.as_str()) {
                    return Err(ConfigError::Invalid(format!(
                        "{key}: duplicate column `{}`",
                        column.name
                    )));
                }
            }
        }
        Ok(registry)
    }

    pub fn get(&self, source_id: &str, kind: EntityKind) -> Option<&ExpectedSchema> {
        self.feeds.get(&format!("{source_id}/{kind}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedColumn {
    pub name: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeChange {
    pub column: String,
    pub expected: FieldType,
    /// First offending value, verbatim.
    pub sample: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftReport {
    pub added: Vec<String>,
    pub removed: Vec<RemovedColumn>,
    pub type_changed: Vec<TypeChange>,
    /// Set exactly when a required column is missing.
    pub blocking: bool,
}

impl DriftReport {
    pub fn is_clean(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.type_changed.is_empty()
    }

    pub fn blocking_reason(&self) -> String {
        let missing: Vec<&str> = self
            .removed
            .iter()
            .filter(|c| c.required)
            .map(|c| c.name.as_str())
            .collect();
        format!("schema_drift:missing:{}", missing.join(","))
    }
}

/// Compares observed columns with the expected schema. Renames surface as a
/// removed and an added column; nothing is inferred.
pub fn detect_schema_drift(
    columns: &[String],
    payloads: &[&Payload],
    expected: &ExpectedSchema,
) -> DriftReport {
    let mut report = DriftReport::default();
    for column in columns {
        if !expected.columns.iter().any(|c| &c.name == column) {
            report.added.push(column.clone());
        }
    }
    for spec in &expected.columns {
        if !columns.iter().any(|c| c == &spec.name) {
            report.removed.push(RemovedColumn {
                name: spec.name.clone(),
                required: spec.required,
            });
            report.blocking |= spec.required;
            continue;
        }
        if !(spec.ty.is_numeric() || spec.ty == FieldType::Bool) {
            continue;
        }
        let bad = payloads
            .iter()
            .filter_map(|p| p.get(&spec.name))
            .map(str::trim)
            .find(|v| !v.is_empty() && spec.ty.canonicalize(v).is_none());
        if let Some(sample) = bad {
            report.type_changed.push(TypeChange {
                column: spec.name.clone(),
                expected: spec.ty,
                sample: sample.to_string(),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schema() -> ExpectedSchema {
        serde_json::from_str(
            r#"{"columns": [{"name": "invoice_id", "required": true}, {"name": "acct", "required": true},
                {"name": "amount", "type": "number"}, {"name": "memo"}]}"#,
        )
        .unwrap()
    }

    fn payload(cols: &[(&str, &str)]) -> Payload {
        Payload(
            cols.iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    fn run(rows: &[Payload]) -> DriftReport {
        let mut columns: Vec<String> = Vec::new();
        for r in rows {
            for k in r.keys() {
                if !columns.iter().any(|c| c == k) {
                    columns.push(k.to_string());
                }
            }
        }
        let refs: Vec<&Payload> = rows.iter().collect();
        detect_schema_drift(&columns, &refs, &schema())
    }

    #[test]
    fn additive_drift_passes() {
        let r = run(&[payload(&[
            ("invoice_id", "1"),
            ("acct", "a"),
            ("amount", "1"),
            ("memo", ""),
            ("crew_notes", "x"),
        ])]);
        assert_eq!(r.added, vec!["crew_notes"]);
        assert!(!r.blocking);
        assert!(!r.is_clean());
    }

    #[test]
    fn missing_required_blocks() {
        let r = run(&[payload(&[("acct", "a"), ("amount", "1"), ("memo", "")])]);
        assert!(r.blocking);
        assert_eq!(r.blocking_reason(), "schema_drift:missing:invoice_id");
        let optional = run(&[payload(&[
            ("invoice_id", "1"),
            ("acct", "a"),
            ("amount", "1"),
        ])]);
        assert!(!optional.blocking);
        assert_eq!(
            optional.removed,
            vec![RemovedColumn {
                name: "memo".into(),
                required: false
            }]
        );
    }

    #[test]
    fn rename_is_removed_plus_added() {
        let r = run(&[payload(&[
            ("invoice_id", "1"),
            ("account_id", "a"),
            ("amount", "1"),
            ("memo", ""),
        ])]);
        assert_eq!(r.added, vec!["account_id"]);
        assert_eq!(
            r.removed,
            vec![RemovedColumn {
                name: "acct".into(),
                required: true
            }]
        );
        assert!(r.blocking);
    }

    #[test]
    fn type_change_is_reported() {
        let r = run(&[
            payload(&[
                ("invoice_id", "1"),
                ("acct", "a"),
                ("amount", "12.5"),
                ("memo", ""),
            ]),
            payload(&[
                ("invoice_id", "2"),
                ("acct", "a"),
                ("amount", "USD 3"),
                ("memo", ""),
            ]),
        ]);
        assert_eq!(r.type_changed.len(), 1);
        assert_eq!(r.type_changed[0].sample, "USD 3");
        assert!(!r.blocking);
    }

    #[test]
    fn clean_batch() {
        assert!(run(&[payload(&[
            ("invoice_id", "1"),
            ("acct", "a"),
            ("amount", "1"),
            ("memo", "")
        ])])
        .is_clean());
    }
}
