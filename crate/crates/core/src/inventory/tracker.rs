use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::detect::{evaluate, AnomalyConfig, AnomalyFlag, Evaluation};
use super::snapshot::{series_label, Movement, MovementLedger, SeriesKey, SnapshotRow};
use crate::date::Date;

/// Output of closing one business day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DayInventory {
    pub snapshot: Vec<SnapshotRow>,
    pub flags: Vec<AnomalyFlag>,
    /// Series evaluated with too little history.
    pub insufficient: usize,
}

/// Day-stepped snapshots and detection. Each passing snapshot row becomes
/// one observation of its series; quarantined rows are not observations.
#[derive(Debug, Clone)]
pub struct InventoryTracker {
    ledger: MovementLedger,
    history: BTreeMap<SeriesKey, Vec<(Date, f64)>>,
    config: AnomalyConfig,
}

impl InventoryTracker {
    pub fn new(config: AnomalyConfig) -> Self {
        InventoryTracker {
            ledger: MovementLedger::default(),
            history: BTreeMap::new(),
            config,
        }
    }

    pub fn ledger(&self) -> &MovementLedger {
        &self.ledger
    }

    pub fn history(&self) -> &BTreeMap<SeriesKey, Vec<(Date, f64)>> {
        &self.history
    }

    pub fn observe(&mut self, movement: &Movement) {
        self.ledger.add(movement);
    }

    pub fn close_day(&mut self, day: Date) -> DayInventory {
        let snapshot = self.ledger.snapshot(day);
        let mut out = DayInventory {
            snapshot,
            ..DayInventory::default()
        };
        for row in out.snapshot.iter().filter(|r| r.is_pass()) {
            let key = (row.material_code.clone(), row.location_id.clone());
            let points = self.history.entry(key.clone()).or_default();
            let x = row.quantity_on_hand as f64;
            let values: Vec<f64> = points
                .iter()
                .rev()
                .take(self.config.window_size)
                .rev()
                .map(|p| p.1)
                .collect();
            match evaluate(&series_label(&key), day, &values, x, &self.config) {
                Evaluation::Insufficient { .. } => out.insufficient += 1,
                Evaluation::Scored { flags, .. } => out.flags.extend(flags),
            }
            points.push((day, x));
        }
        out
    }
}
