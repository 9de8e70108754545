//! Raw tier: records exactly as received, stamped with their partition.
//!
//! Parsing of CSV/NDJSON bytes happens in the std companion crate; this
//! module turns parsed rows into [`RawRecord`]s and defines batch identity.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::date::{parse_business_date, Date};
use crate::digest::sha256_hex;
use crate::entity::EntityKind;

/// Field-name to raw-string map that keeps the source's field order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Payload(pub Vec<(String, String)>);

impl Payload {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == field)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }
}

impl Serialize for Payload {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OrderedVisitor;

        impl<'de> Visitor<'de> for OrderedVisitor {
            type Value = Payload;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of string values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Payload, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    entries.push((k, v));
                }
                Ok(Payload(entries))
            }
        }

        deserializer.deserialize_map(OrderedVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionKey {
    pub source_id: String,
    pub as_of: Date,
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source_id, self.as_of)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub lineage_id: String,
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub payload: Payload,
    /// The event date exactly as the source stated it.
    pub event_date: String,
    pub ingested_as_of: Date,
    pub batch_hash: String,
}

impl RawRecord {
    pub fn partition_key(&self) -> PartitionKey {
        PartitionKey {
            source_id: self.source_id.clone(),
            as_of: self.ingested_as_of,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReceipt {
    pub batch_hash: String,
    pub records_written: usize,
    pub partition_key: PartitionKey,
    pub duplicate_of: Option<String>,
}

/// Batch identity: digest of the raw file bytes.
pub fn batch_hash(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}

/// Lineage ids are derived from the batch digest and the row position, so
/// they are unique without a random source and identical across replays.
pub fn lineage_id(batch_hash: &str, row: usize) -> String {
    format!("{}-{:06}", &batch_hash[..16.min(batch_hash.len())], row)
}

/// The one type cast performed on the raw tier: the event-date column must
/// exist and parse under one of the declared formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateCheck {
    pub column: String,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BatchMeta {
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub as_of: Date,
    pub batch_hash: String,
}

/// A parsed row and the line of the source file it came from.
#[derive(Debug, Clone)]
pub struct SourceRow {
    pub line: usize,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Builds the records of one batch. All-or-nothing: any bad row rejects the
/// whole batch with one diagnostic per offending row.
pub fn build_records(
    meta: &BatchMeta,
    rows: Vec<SourceRow>,
    check: &DateCheck,
) -> Result<Vec<RawRecord>, Vec<RowDiagnostic>> {
    let mut diagnostics = Vec::new();
    let mut records = Vec::with_capacity(rows.len());
    for (index, row) in rows.into_iter().enumerate() {
        let event_date = match row.payload.get(&check.column) {
            None => {
                diagnostics.push(RowDiagnostic {
                    line: row.line,
                    message: format!("missing date column `{}`", check.column),
                });
                continue;
            }
            Some(value) => {
                if parse_business_date(value, &check.formats, 0).is_none() {
                    diagnostics.push(RowDiagnostic {
                        line: row.line,
                        message: format!(
                            "`{}` value {:?} matches none of {:?}",
                            check.column, value, check.formats
                        ),
                    });
                    continue;
                }
                String::from(value)
            }
        };
        records.push(RawRecord {
            lineage_id: lineage_id(&meta.batch_hash, index + 1),
            source_id: meta.source_id.clone(),
            entity_kind: meta.entity_kind,
            payload: row.payload,
            event_date,
            ingested_as_of: meta.as_of,
            batch_hash: meta.batch_hash.clone(),
        });
    }
    if diagnostics.is_empty() {
        Ok(records)
    } else {
        Err(diagnostics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::parse_iso;
    use alloc::string::ToString;
    use alloc::vec;

    fn row(line: usize, fields: &[(&str, &str)]) -> SourceRow {
        SourceRow {
            line,
            payload: Payload(
                fields
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            ),
        }
    }

    fn meta() -> BatchMeta {
        BatchMeta {
            source_id: "billing".into(),
            entity_kind: EntityKind::InvoiceLine,
            as_of: parse_iso("2026-01-10").unwrap(),
            batch_hash: batch_hash(b"file"),
        }
    }

    fn check() -> DateCheck {
        DateCheck {
            column: "invoice_date".into(),
            formats: vec!["MM/DD/YYYY".into()],
        }
    }

    #[test]
    fn rows_become_records_with_lineage() {
        let rows = vec![
            row(2, &[("invoice_id", "I1"), ("invoice_date", "01/09/2026")]),
            row(3, &[("invoice_id", "I2"), ("invoice_date", "01/10/2026")]),
        ];
        let records = build_records(&meta(), rows, &check()).unwrap();
        assert_eq!(records.len(), 2);
        assert_ne!(records[0].lineage_id, records[1].lineage_id);
        assert_eq!(records[1].event_date, "01/10/2026");
        assert_eq!(records[0].partition_key().to_string(), "billing/2026-01-10");
    }

    #[test]
    fn one_bad_row_rejects_the_batch() {
        let rows = vec![
            row(2, &[("invoice_id", "I1"), ("invoice_date", "01/09/2026")]),
            row(3, &[("invoice_id", "I2"), ("invoice_date", "2026-13-40")]),
            row(4, &[("invoice_id", "I3")]),
        ];
        let diags = build_records(&meta(), rows, &check()).unwrap_err();
        assert_eq!(diags.iter().map(|d| d.line).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn payload_keeps_field_order_through_json() {
        let p = Payload(vec![("z".into(), "1".into()), ("a".into(), "2".into())]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"z":"1","a":"2"}"#);
        let back: Payload = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
