use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::entity::EntityKind;
use crate::staging::StagedRecord;

pub type SeriesKey = (String, String);

pub fn series_label(key: &SeriesKey) -> String {
    let mut s = key.0.clone();
    s.push('|');
    s.push_str(&key.1);
    s
}

/// Signed stock movement: receipts and positive adjustments add stock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Movement {
    pub material_code: String,
    pub location_id: String,
    pub date: Date,
    pub quantity: i64,
}

impl Movement {
    pub fn from_record(record: &StagedRecord) -> Option<Movement> {
        if !record.is_pass() {
            return None;
        }
        let sign = match record.entity_kind {
            EntityKind::Receiving | EntityKind::InventoryMovement => 1,
            EntityKind::Issuance => -1,
            _ => return None,
        };
        let quantity: i64 = record.get("quantity")?.parse().ok()?;
        Some(Movement {
            material_code: record.get("material_code")?.to_string(),
            location_id: record.get("location_id")?.to_string(),
            date: record.event_date?,
            quantity: sign * quantity,
        })
    }

    pub fn key(&self) -> SeriesKey {
        (self.material_code.clone(), self.location_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SnapshotQuality {
    Pass,
    Quarantined { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub snapshot_date: Date,
    pub material_code: String,
    pub location_id: String,
    /// Negative only on quarantined rows.
    pub quantity_on_hand: i64,
    pub quality: SnapshotQuality,
}

impl SnapshotRow {
    pub fn is_pass(&self) -> bool {
        self.quality == SnapshotQuality::Pass
    }
}

/// Every movement observed so far, per (material, location).
#[derive(Debug, Clone, Default)]
pub struct MovementLedger {
    by_key: BTreeMap<SeriesKey, Vec<(Date, i64)>>,
}

impl MovementLedger {
    pub fn add(&mut self, m: &Movement) {
        let entries = self.by_key.entry(m.key()).or_default();
        let at = entries.partition_point(|(d, _)| *d <= m.date);
        entries.insert(at, (m.date, m.quantity));
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.by_key.keys()
    }

    /// Movements of `key` dated on or before `date`, oldest first.
    pub fn through(&self, key: &SeriesKey, date: Date) -> &[(Date, i64)] {
        let entries = self.by_key.get(key).map(Vec::as_slice).unwrap_or(&[]);
        &entries[..entries.partition_point(|(d, _)| *d <= date)]
    }

    /// One row per key with at least one movement dated by `date`.
    pub fn snapshot(&self, date: Date) -> Vec<SnapshotRow> {
        let mut rows = Vec::new();
        for key in self.by_key.keys() {
            let moves = self.through(key, date);
            if moves.is_empty() {
                continue;
            }
            let on_hand: i64 = moves.iter().map(|(_, q)| q).sum();
            rows.push(SnapshotRow {
                snapshot_date: date,
                material_code: key.0.clone(),
                location_id: key.1.clone(),
                quantity_on_hand: on_hand,
                quality: if on_hand < 0 {
                    SnapshotQuality::Quarantined {
                        reason: "negative_balance".into(),
                    }
                } else {
                    SnapshotQuality::Pass
                },
            });
        }
        rows
    }
}
