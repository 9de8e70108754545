use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::detect::{AnomalyFlag, Method};
use crate::date::Date;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Open,
    Confirmed,
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispositionRecord {
    pub flag_id: String,
    pub disposition: Disposition,
    pub note: String,
    pub as_of: Date,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown anomaly flag {0}")]
pub struct UnknownFlag(pub String);

/// Latest disposition per flag; later records win.
pub fn dispositions(
    flags: &[AnomalyFlag],
    records: &[DispositionRecord],
) -> Result<BTreeMap<String, Disposition>, UnknownFlag> {
    let known: BTreeMap<&str, ()> = flags.iter().map(|f| (f.flag_id.as_str(), ())).collect();
    let mut out = BTreeMap::new();
    for r in records {
        if !known.contains_key(r.flag_id.as_str()) {
            return Err(UnknownFlag(r.flag_id.clone()));
        }
        out.insert(r.flag_id.clone(), r.disposition);
    }
    Ok(out)
}

/// All open flags for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueLine {
    pub series: String,
    pub snapshot_date: Date,
    pub observed: f64,
    /// Largest |score| / threshold among the grouped flags.
    pub normalized_score: f64,
    pub methods: Vec<Method>,
    pub flag_ids: Vec<String>,
}

/// Open flags grouped by (series, date), highest normalized score first,
/// then oldest date, then series.
pub fn investigation_queue(
    flags: &[AnomalyFlag],
    records: &[DispositionRecord],
) -> Result<Vec<QueueLine>, UnknownFlag> {
    let disp = dispositions(flags, records)?;
    let mut groups: BTreeMap<(String, Date), QueueLine> = BTreeMap::new();
    for f in flags {
        if disp
            .get(&f.flag_id)
            .is_some_and(|d| *d != Disposition::Open)
        {
            continue;
        }
        let line = groups
            .entry((f.series.clone(), f.snapshot_date))
            .or_insert_with(|| QueueLine {
                series: f.series.clone(),
                snapshot_date: f.snapshot_date,
                observed: f.observed,
                normalized_score: 0.0,
                methods: Vec::new(),
                flag_ids: Vec::new(),
            });
        line.normalized_score = line.normalized_score.max(f.normalized());
        line.methods.push(f.method);
        line.flag_ids.push(f.flag_id.clone());
    }
    let mut lines: Vec<QueueLine> = groups.into_values().collect();
    for line in &mut lines {
        line.methods.sort();
    }
    lines.sort_by(|a, b| {
        b.normalized_score
            .total_cmp(&a.normalized_score)
            .then(a.snapshot_date.cmp(&b.snapshot_date))
            .then(a.series.cmp(&b.series))
    });
    Ok(lines)
}
