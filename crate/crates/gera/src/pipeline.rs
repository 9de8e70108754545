//! Day-stepped pipeline: staging, reconciliation and inventory, replayed
//! from the first effective day on every run.
//!
//! Days already processed are replayed to rebuild in-memory state and every
//! output they produce is checked against what the store holds.

use std::collections::BTreeMap;

use gera_core::date::{add_days, day_range, Date};
use gera_core::digest::canonical_json;
use gera_core::inventory::{AnomalyFlag, InventoryTracker, Movement, SnapshotRow};
use gera_core::reconcile::{Deduper, ExceptionEvent, ReconReport, Reconciler};
use gera_core::staging::{
    apply_assertions, stage_batch, DriftReport, Normalizer, QualityReport, ReferenceIndex,
    StagedRecord,
};
use gera_core::EntityKind;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{integrity, invalid, Result};
use crate::raw::{self, BatchEntry, RawManifest};
use crate::store::{self, Store};

pub const DEFAULT_LOOKBACK_DAYS: u32 = 35;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedBatch {
    pub batch_hash: String,
    pub partition: String,
    pub reason: String,
}

/// Pipeline cursor and the effective day assigned to each batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLedger {
    pub processed_through: Option<Date>,
    pub replay_digest: Option<String>,
    /// Batch hash to the day its records entered the pipeline.
    pub effective: BTreeMap<String, Date>,
    pub skipped: Vec<SkippedBatch>,
}

impl RunLedger {
    pub fn load(store: &Store) -> Result<RunLedger> {
        store::read_json_or_default(&store.recon_ledger())
    }

    pub fn require_processed(&self, as_of: Date) -> Result<Date> {
        match self.processed_through {
            Some(through) if as_of <= through => Ok(through),
            Some(through) => Err(invalid(format!("missing data: as_of {as_of} is after processed_through {through}; run the pipeline first"))),
            None => Err(invalid(format!("missing data: nothing processed yet; run the pipeline through {as_of} first"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStagingReport {
    pub batch_hash: String,
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub partition: Date,
    pub records: usize,
    pub passed: usize,
    pub quarantined: usize,
    pub drift: Option<DriftReport>,
    pub quality: QualityReport,
}

impl BatchStagingReport {
    pub fn batch_key(&self) -> String {
        gera_core::synth::batch_key(&self.source_id, self.entity_kind, self.partition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStagingReport {
    pub as_of: Date,
    pub batches: Vec<BatchStagingReport>,
}

/// State rebuilt by replay, through `as_of`.
pub struct Replay {
    pub as_of: Date,
    pub engine: Reconciler,
    pub tracker: InventoryTracker,
    /// Every staged record, passing or not, with the day it became effective.
    pub staged: Vec<(Date, StagedRecord)>,
    pub flags: Vec<AnomalyFlag>,
    /// Snapshot rows of every replayed day.
    pub snapshots: Vec<SnapshotRow>,
    pub staging: Vec<DayStagingReport>,
    pub events: Vec<ExceptionEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub as_of: Date,
    pub days: usize,
    pub batches_staged: usize,
    pub records_staged: usize,
    pub new_events: usize,
    pub new_flags: usize,
    pub pending_batches: usize,
    pub skipped_batches: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Write,
    Read,
}

/// Days each batch is assigned to, sorted for a stable day order.
fn batches_by_day<'a>(
    manifest: &'a RawManifest,
    ledger: &RunLedger,
) -> BTreeMap<Date, Vec<&'a BatchEntry>> {
    let mut days: BTreeMap<Date, Vec<&BatchEntry>> = BTreeMap::new();
    for entry in &manifest.batches {
        if let Some(day) = ledger.effective.get(&entry.batch_hash) {
            days.entry(*day).or_default().push(entry);
        }
    }
    for batches in days.values_mut() {
        batches.sort_by(|a, b| {
            (&a.source_id, a.entity_kind, a.as_of, &a.batch_hash).cmp(&(
                &b.source_id,
                b.entity_kind,
                b.as_of,
                &b.batch_hash,
            ))
        });
    }
    days
}

/// Assigns effective days to batches not yet assigned.
fn assign(manifest: &RawManifest, ledger: &mut RunLedger, as_of: Date, lookback: u32) -> usize {
    let cursor = ledger.processed_through;
    let mut pending = 0;
    for entry in &manifest.batches {
        if ledger.effective.contains_key(&entry.batch_hash)
            || ledger
                .skipped
                .iter()
                .any(|s| s.batch_hash == entry.batch_hash)
        {
            continue;
        }
        let p = entry.as_of;
        match cursor {
            None => {
                if p <= as_of {
                    ledger.effective.insert(entry.batch_hash.clone(), p);
                } else {
                    pending += 1;
                }
            }
            Some(c) if p > c => {
                if p <= as_of {
                    ledger.effective.insert(entry.batch_hash.clone(), p);
                } else {
                    pending += 1;
                }
            }
            Some(c) => {
                if as_of <= c {
                    pending += 1;
                } else if p >= add_days(as_of, -i64::from(lookback)) {
                    ledger
                        .effective
                        .insert(entry.batch_hash.clone(), add_days(c, 1));
                } else {
                    ledger.skipped.push(SkippedBatch {
                        batch_hash: entry.batch_hash.clone(),
                        partition: entry.partition().to_string(),
                        reason: format!(
                            "partition older than the {lookback}-day lookback from {as_of}"
                        ),
                    });
                }
            }
        }
    }
    pending
}

/// Runs the pipeline through `as_of`. The caller holds the store lock.
pub fn run(store: &Store, cfg: &Config, as_of: Date, lookback: u32) -> Result<RunSummary> {
    let manifest = RawManifest::load(store)?;
    let mut ledger = RunLedger::load(store)?;
    check_digest(&ledger, cfg)?;
    if let Some(through) = ledger.processed_through {
        if as_of < through {
            return Err(invalid(format!(
                "already processed through {through}; as_of {as_of} is earlier"
            )));
        }
    }
    let pending = assign(&manifest, &mut ledger, as_of, lookback);
    let (replay, stats) = replay_days(store, cfg, &manifest, &ledger, as_of, Mode::Write)?;

    let cursor = ledger.processed_through;
    let new_events: Vec<String> = replay
        .events
        .iter()
        .filter(|e| cursor.is_none_or(|c| e.as_of > c))
        .map(|e| serde_json::to_string(e).expect("serializable"))
        .collect();
    store::append_lines(&store.exceptions(), &new_events)?;

    let flags_bytes = store::ndjson_bytes(&replay.flags);
    let old_flags = store::read_optional(&store.flags())?.unwrap_or_default();
    if !flags_bytes.starts_with(&old_flags) {
        return Err(integrity(
            "inventory/flags.ndjson differs from the replayed flags",
        ));
    }
    let old_flag_count = old_flags.iter().filter(|b| **b == b'\n').count();
    if flags_bytes != old_flags {
        store::write_atomic(&store.flags(), &flags_bytes)?;
    }

    let report = ReconReport::build(&replay.engine).map_err(|e| integrity(e.to_string()))?;
    let mut json = canonical_json(&report);
    json.push('\n');
    store::write_atomic(&store.recon_report(as_of, "json"), json.as_bytes())?;
    store::write_atomic(
        &store.recon_report(as_of, "txt"),
        report.to_text().as_bytes(),
    )?;

    ledger.processed_through = Some(as_of);
    ledger.replay_digest = Some(cfg.replay_digest());
    store::write_json(&store.recon_ledger(), &ledger)?;

    Ok(RunSummary {
        as_of,
        days: stats.days,
        batches_staged: stats.batches_staged,
        records_staged: stats.records_staged,
        new_events: new_events.len(),
        new_flags: replay.flags.len() - old_flag_count,
        pending_batches: pending,
        skipped_batches: ledger.skipped.len(),
    })
}

/// Rebuilds state through `as_of` without writing anything.
pub fn replay(store: &Store, cfg: &Config, as_of: Date) -> Result<Replay> {
    let manifest = RawManifest::load(store)?;
    let ledger = RunLedger::load(store)?;
    check_digest(&ledger, cfg)?;
    ledger.require_processed(as_of)?;
    Ok(replay_days(store, cfg, &manifest, &ledger, as_of, Mode::Read)?.0)
}

fn check_digest(ledger: &RunLedger, cfg: &Config) -> Result<()> {
    match &ledger.replay_digest {
        Some(d) if *d != cfg.replay_digest() => Err(integrity(
            "matchspecs.json or anomaly.json changed after the store was first run; replay would disagree with stored outputs (use a fresh store)",
        )),
        _ => Ok(()),
    }
}

#[derive(Default)]
struct Stats {
    days: usize,
    batches_staged: usize,
    records_staged: usize,
}

fn replay_days(
    store: &Store,
    cfg: &Config,
    manifest: &RawManifest,
    ledger: &RunLedger,
    as_of: Date,
    mode: Mode,
) -> Result<(Replay, Stats)> {
    let cursor = ledger.processed_through;
    let by_day = batches_by_day(manifest, ledger);
    let first = by_day.keys().next().copied().unwrap_or(as_of).min(as_of);

    let logged: Vec<ExceptionEvent> = store::read_ndjson(&store.exceptions())?;
    let mut logged_by_day: BTreeMap<Date, Vec<ExceptionEvent>> = BTreeMap::new();
    for event in logged {
        logged_by_day.entry(event.as_of).or_default().push(event);
    }
    if let (Some(c), Some(last)) = (cursor, logged_by_day.keys().next_back()) {
        if *last > c {
            return Err(integrity(format!(
                "recon/exceptions.ndjson has events after processed_through {c}"
            )));
        }
    }

    let normalizer = Normalizer::new(&cfg.rules, &cfg.crosswalks);
    let mut reference = ReferenceIndex::for_targets(&cfg.assertions.referential_targets());
    let mut engine = Reconciler::new(&cfg.matchspecs).map_err(|e| invalid(e.to_string()))?;
    let mut tracker = InventoryTracker::new(cfg.anomaly.clone());
    let mut inventory_dedup = Deduper::default();
    let mut out = Replay {
        as_of,
        engine: Reconciler::new(&cfg.matchspecs).map_err(|e| invalid(e.to_string()))?,
        tracker: InventoryTracker::new(cfg.anomaly.clone()),
        staged: Vec::new(),
        flags: Vec::new(),
        snapshots: Vec::new(),
        staging: Vec::new(),
        events: Vec::new(),
    };
    let mut stats = Stats::default();

    for day in day_range(first, as_of) {
        stats.days += 1;
        let processed = cursor.is_some_and(|c| day <= c);
        let batches = by_day.get(&day).map(Vec::as_slice).unwrap_or(&[]);

        let (records, report) = stage_day(store, cfg, &normalizer, &reference, day, batches, mode)?;
        if let Some(report) = report {
            stats.batches_staged += report.batches.len();
            stats.records_staged += report.batches.iter().map(|b| b.records).sum::<usize>();
            out.staging.push(report);
        }
        reference.add(records.iter().filter(|r| r.is_pass()));

        let produced = engine
            .step(day, records.clone())
            .map_err(|e| integrity(format!("{day}: {e}")))?;
        if processed {
            let logged = logged_by_day.remove(&day).unwrap_or_default();
            let (manual, system): (Vec<_>, Vec<_>) =
                logged.into_iter().partition(|e| e.change.is_manual());
            if produced != system {
                return Err(integrity(format!("replay of {day} produced exception events that differ from recon/exceptions.ndjson")));
            }
            out.events.extend(system);
            for event in manual {
                engine
                    .apply_manual(&event)
                    .map_err(|e| integrity(format!("{day}: manual event {}: {e}", event.seq)))?;
                out.events.push(event);
            }
        } else {
            out.events.extend(produced);
        }

        let mut movers: Vec<&StagedRecord> = records.iter().filter(|r| r.is_pass()).collect();
        movers.sort_by(|a, b| a.lineage_id.cmp(&b.lineage_id));
        for record in movers {
            if let Some(movement) = Movement::from_record(record) {
                if inventory_dedup.admit(record).is_ok() {
                    tracker.observe(&movement);
                }
            }
        }
        let inv = tracker.close_day(day);
        let snapshot_bytes = store::ndjson_bytes(&inv.snapshot);
        let path = store.snapshot(day);
        if processed || mode == Mode::Read {
            let stored = store::read_optional(&path)?;
            if stored.as_deref() != Some(snapshot_bytes.as_slice()) {
                return Err(integrity(format!(
                    "inventory snapshot {day} differs from replay"
                )));
            }
        } else {
            store::write_atomic(&path, &snapshot_bytes)?;
        }
        out.flags.extend(inv.flags);
        out.snapshots.extend(inv.snapshot);
        out.staged.extend(records.into_iter().map(|r| (day, r)));
    }

    out.engine = engine;
    out.tracker = tracker;
    Ok((out, stats))
}

/// Staged records of one day, in batch order, and the day's staging report
/// when anything was newly staged.
fn stage_day(
    store: &Store,
    cfg: &Config,
    normalizer: &Normalizer<'_>,
    reference: &ReferenceIndex,
    day: Date,
    batches: &[&BatchEntry],
    mode: Mode,
) -> Result<(Vec<StagedRecord>, Option<DayStagingReport>)> {
    let all_staged = batches.iter().all(|b| {
        store
            .staged_batch(b.entity_kind.as_str(), day, &b.batch_hash)
            .exists()
    });
    if all_staged {
        let mut records = Vec::new();
        for b in batches {
            let pass_path = store.staged_batch(b.entity_kind.as_str(), day, &b.batch_hash);
            let mut batch: Vec<StagedRecord> = store::read_ndjson(&pass_path)?;
            batch.extend(store::read_ndjson::<StagedRecord>(
                &store.quarantine_batch(day, &b.batch_hash),
            )?);
            batch.sort_by(|x, y| x.lineage_id.cmp(&y.lineage_id));
            if batch.len() != b.records {
                return Err(integrity(format!(
                    "staged batch {} on {day} has {} records, raw has {}",
                    b.batch_hash,
                    batch.len(),
                    b.records
                )));
            }
            records.extend(batch);
        }
        let report = if mode == Mode::Read && !batches.is_empty() {
            let path = store.staging_report(day);
            Some(store::read_json::<DayStagingReport>(&path)?)
        } else {
            None
        };
        return Ok((records, report));
    }
    if mode == Mode::Read {
        return Err(integrity(format!("staged files for {day} are missing")));
    }

    let mut staged = Vec::with_capacity(batches.len());
    for b in batches {
        let raw_records = raw::load_batch(store, b)?;
        let expected = cfg.schemas.get(&b.source_id, b.entity_kind);
        staged.push(stage_batch(&raw_records, normalizer, expected));
    }
    let mut day_reference = reference.clone();
    day_reference.add(
        staged
            .iter()
            .flat_map(|s| s.records.iter())
            .filter(|r| r.is_pass()),
    );

    let mut records = Vec::new();
    let mut report = DayStagingReport {
        as_of: day,
        batches: Vec::new(),
    };
    for (b, mut batch) in batches.iter().zip(staged) {
        let quality = apply_assertions(&mut batch.records, &cfg.assertions, &day_reference);
        let (pass, quarantined): (Vec<_>, Vec<_>) = batch
            .records
            .iter()
            .cloned()
            .partition(StagedRecord::is_pass);
        if !quarantined.is_empty() {
            store::write_atomic(
                &store.quarantine_batch(day, &b.batch_hash),
                &store::ndjson_bytes(&quarantined),
            )?;
        }
        store::write_atomic(
            &store.staged_batch(b.entity_kind.as_str(), day, &b.batch_hash),
            &store::ndjson_bytes(&pass),
        )?;
        report.batches.push(BatchStagingReport {
            batch_hash: b.batch_hash.clone(),
            source_id: b.source_id.clone(),
            entity_kind: b.entity_kind,
            partition: b.as_of,
            records: batch.records.len(),
            passed: pass.len(),
            quarantined: quarantined.len(),
            drift: batch.drift,
            quality,
        });
        records.extend(batch.records);
    }
    if !batches.is_empty() {
        store::write_json(&store.staging_report(day), &report)?;
    }
    Ok((records, Some(report).filter(|r| !r.batches.is_empty())))
}
