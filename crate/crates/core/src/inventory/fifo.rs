use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::snapshot::{MovementLedger, SeriesKey};
use crate::date::{days_between, Date};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    #[serde(rename = "0-30")]
    D0To30,
    #[serde(rename = "31-60")]
    D31To60,
    #[serde(rename = "61-90")]
    D61To90,
    #[serde(rename = ">90")]
    Over90,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [
        Bucket::D0To30,
        Bucket::D31To60,
        Bucket::D61To90,
        Bucket::Over90,
    ];

    /// Upper bounds are inclusive.
    pub fn for_age(age_days: i64) -> Bucket {
        match age_days {
            ..=30 => Bucket::D0To30,
            31..=60 => Bucket::D31To60,
            61..=90 => Bucket::D61To90,
            _ => Bucket::Over90,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::D0To30 => "0-30",
            Bucket::D31To60 => "31-60",
            Bucket::D61To90 => "61-90",
            Bucket::Over90 => ">90",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotAllocation {
    pub material_code: String,
    pub location_id: String,
    pub received_date: Date,
    pub remaining_qty: i64,
    pub age_days: i64,
    pub bucket: Bucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("issued {issued} exceeds received {received}")]
pub struct NegativeBalance {
    pub received: i64,
    pub issued: i64,
}

/// Surviving `(received_date, qty)` lots after `issued` units leave
/// oldest-first. `lots` must be ordered by received date.
pub fn fifo_remaining(
    lots: &[(Date, i64)],
    issued: i64,
) -> Result<Vec<(Date, i64)>, NegativeBalance> {
    let received: i64 = lots.iter().map(|(_, q)| q).sum();
    if issued > received {
        return Err(NegativeBalance { received, issued });
    }
    let mut left = issued;
    let mut out = Vec::new();
    for &(date, qty) in lots {
        let take = left.min(qty);
        left -= take;
        if qty > take {
            out.push((date, qty - take));
        }
    }
    Ok(out)
}

/// FIFO allocation of one key's movements at `snapshot_date`. Positive
/// movements form lots aggregated per received date; negative movements
/// are consumption.
pub fn fifo_age(
    key: &SeriesKey,
    snapshot_date: Date,
    movements: &[(Date, i64)],
) -> Result<Vec<LotAllocation>, NegativeBalance> {
    let mut lots: BTreeMap<Date, i64> = BTreeMap::new();
    let mut issued = 0i64;
    for &(date, qty) in movements.iter().filter(|(d, _)| *d <= snapshot_date) {
        if qty >= 0 {
            *lots.entry(date).or_default() += qty;
        } else {
            issued -= qty;
        }
    }
    let lots: Vec<(Date, i64)> = lots.into_iter().filter(|(_, q)| *q > 0).collect();
    Ok(fifo_remaining(&lots, issued)?
        .into_iter()
        .map(|(received_date, remaining_qty)| {
            let age_days = days_between(received_date, snapshot_date);
            LotAllocation {
                material_code: key.0.clone(),
                location_id: key.1.clone(),
                received_date,
                remaining_qty,
                age_days,
                bucket: Bucket::for_age(age_days),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketTotals {
    #[serde(rename = "0-30")]
    pub d0_30: i64,
    #[serde(rename = "31-60")]
    pub d31_60: i64,
    #[serde(rename = "61-90")]
    pub d61_90: i64,
    #[serde(rename = ">90")]
    pub over_90: i64,
}

impl BucketTotals {
    pub fn add(&mut self, bucket: Bucket, qty: i64) {
        match bucket {
            Bucket::D0To30 => self.d0_30 += qty,
            Bucket::D31To60 => self.d31_60 += qty,
            Bucket::D61To90 => self.d61_90 += qty,
            Bucket::Over90 => self.over_90 += qty,
        }
    }

    pub fn total(&self) -> i64 {
        self.d0_30 + self.d31_60 + self.d61_90 + self.over_90
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyAging {
    pub material_code: String,
    pub location_id: String,
    pub on_hand: i64,
    pub buckets: BucketTotals,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgingReport {
    pub snapshot_date: Date,
    pub keys: Vec<KeyAging>,
    pub totals: BucketTotals,
    /// Keys holding stock older than 90 days.
    pub over_90: Vec<KeyAging>,
    /// Keys excluded for a negative balance, as `material|location`.
    pub negative_balance: Vec<String>,
}

impl MovementLedger {
    /// Lot allocations for every key; negative-balance keys are skipped.
    pub fn lots(&self, date: Date) -> Vec<LotAllocation> {
        self.keys()
            .filter_map(|k| fifo_age(k, date, self.through(k, date)).ok())
            .flatten()
            .collect()
    }

    pub fn aging_report(&self, date: Date) -> AgingReport {
        let mut report = AgingReport {
            snapshot_date: date,
            keys: Vec::new(),
            totals: BucketTotals::default(),
            over_90: Vec::new(),
            negative_balance: Vec::new(),
        };
        for key in self.keys() {
            let moves = self.through(key, date);
            if moves.is_empty() {
                continue;
            }
            match fifo_age(key, date, moves) {
                Ok(lots) => {
                    let mut buckets = BucketTotals::default();
                    for lot in &lots {
                        buckets.add(lot.bucket, lot.remaining_qty);
                        report.totals.add(lot.bucket, lot.remaining_qty);
                    }
                    let row = KeyAging {
                        material_code: key.0.clone(),
                        location_id: key.1.clone(),
                        on_hand: buckets.total(),
                        buckets,
                    };
                    if buckets.over_90 > 0 {
                        report.over_90.push(row.clone());
                    }
                    report.keys.push(row);
                }
                Err(_) => report.negative_balance.push(super::series_label(key)),
            }
        }
        report
    }
}

impl AgingReport {
    pub fn to_text(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "inventory aging as_of {}", self.snapshot_date);
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "material", "location", "on_hand", "0-30", "31-60", "61-90", ">90"
        );
        for k in &self.keys {
            let b = &k.buckets;
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:>9} {:>9} {:>9} {:>9} {:>9}",
                k.material_code, k.location_id, k.on_hand, b.d0_30, b.d31_60, b.d61_90, b.over_90
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "total",
            "",
            t.total(),
            t.d0_30,
            t.d31_60,
            t.d61_90,
            t.over_90
        );
        for k in &self.over_90 {
            let _ = writeln!(
                out,
                "over 90 days: {}|{} holds {}",
                k.material_code, k.location_id, k.buckets.over_90
            );
        }
        for key in &self.negative_balance {
            let _ = writeln!(out, "negative balance: {key}");
        }
        out
    }
}
