//! Staging tier: canonical identifiers, dates and categories, plus quality
//! verdicts. Nothing is dropped here; every failure becomes a quarantine
//! reason on the record.

mod assertions;
mod crosswalk;
mod drift;
mod rules;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::entity::EntityKind;
use crate::ingest::RawRecord;

pub use assertions::{
    apply_assertions, Assertion, QualityAssertionSet, QualityReport, ReferenceIndex,
};
pub use crosswalk::{shape_matches, Crosswalk, CrosswalkSet, Lookup};
pub use drift::{
    detect_schema_drift, ColumnSpec, DriftReport, ExpectedSchema, RemovedColumn, SchemaRegistry,
    TypeChange,
};
pub use rules::{
    normalize, Case, FieldRule, NormalizationRuleSet, Normalizer, Rule, SourceSettings,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration JSON: {0}")]
    Json(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Quality {
    Pass,
    Quarantined { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagedRecord {
    pub lineage_id: String,
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub event_date: Option<Date>,
    /// Canonical string form of every populated field.
    pub fields: BTreeMap<String, String>,
    pub quality: Quality,
    /// Digest tag of the rule set and crosswalks this record was staged with.
    pub config_version: String,
}

impl StagedRecord {
    pub fn is_pass(&self) -> bool {
        matches!(self.quality, Quality::Pass)
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }

    pub fn quarantine(&mut self, reason: String) {
        if self.is_pass() {
            self.quality = Quality::Quarantined { reason };
        }
    }

    pub fn quarantine_reason(&self) -> Option<&str> {
        match &self.quality {
            Quality::Pass => None,
            Quality::Quarantined { reason } => Some(reason),
        }
    }
}

/// Result of staging one raw batch.
#[derive(Debug, Clone)]
pub struct BatchStaging {
    pub records: Vec<StagedRecord>,
    pub drift: Option<DriftReport>,
}

/// Stages one raw batch: drift check first, then record normalization. A
/// blocking drift quarantines the whole batch without normalizing it.
pub fn stage_batch(
    records: &[RawRecord],
    normalizer: &Normalizer<'_>,
    expected: Option<&ExpectedSchema>,
) -> BatchStaging {
    let drift = expected.map(|schema| {
        let mut columns: Vec<String> = Vec::new();
        for record in records {
            for key in record.payload.keys() {
                if !columns.iter().any(|c| c == key) {
                    columns.push(String::from(key));
                }
            }
        }
        let payloads: Vec<_> = records.iter().map(|r| &r.payload).collect();
        detect_schema_drift(&columns, &payloads, schema)
    });
    let blocking_reason = drift
        .as_ref()
        .filter(|d| d.blocking)
        .map(DriftReport::blocking_reason);
    let records = records
        .iter()
        .map(|raw| match &blocking_reason {
            Some(reason) => normalizer.quarantined(raw, reason.clone()),
            None => normalizer.normalize(raw),
        })
        .collect();
    BatchStaging { records, drift }
}
