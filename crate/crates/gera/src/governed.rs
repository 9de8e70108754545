//! Governed reads: row-level security over every output, one audit event
//! per read, and the audit log's on-disk form.

use std::collections::{BTreeMap, BTreeSet};

use gera_core::date::Date;
use gera_core::digest::canonical_json;
use gera_core::governance::{
    parse_log, verify, Action, AuditEntry, AuditEvent, AuditLog, Manifest, PolicySet, Principal,
    Territorial, VerifyReport, ANY,
};
use gera_core::inventory::{
    investigation_queue, AgingReport, AnomalyFlag, BucketTotals, DispositionRecord, QueueLine,
};
use gera_core::reconcile::Deduper;
use gera_core::reconcile::{
    events_through, Change, ExceptionBook, ExceptionEvent, ExceptionView, LeftState, ReconReport,
};
use gera_core::semantic::{evaluate, EvalError, MetricData, MetricResult, Row};
use gera_core::EntityKind;

use crate::config::Config;
use crate::error::{integrity, invalid, Result};
use crate::pipeline::{self, Replay, RunLedger};
use crate::store::{self, Store};

/// The territory attribute every governed object exposes.
pub const TERRITORY_FIELD: &str = "location_id";

// ---------------------------------------------------------------- audit log

fn load_manifest(store: &Store) -> Result<Option<Manifest>> {
    match store::read_optional(&store.audit_manifest())? {
        None => Ok(None),
        Some(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| integrity(format!("audit/MANIFEST.json: {e}"))),
    }
}

/// Loads the log and reports on its chain without failing on a break.
pub fn audit_status(store: &Store) -> Result<(Vec<AuditEvent>, VerifyReport)> {
    let bytes = store::read_optional(&store.audit_log())?;
    let manifest = load_manifest(store)?;
    let manifest = match (manifest, &bytes) {
        (Some(m), _) => m,
        (None, None) => return Ok((Vec::new(), AuditLog::default().verify())),
        (None, Some(_)) => {
            return Err(integrity(
                "audit/log.ndjson exists without audit/MANIFEST.json",
            ))
        }
    };
    let bytes = bytes.unwrap_or_default();
    match parse_log(&bytes, manifest.head_seq) {
        Ok(events) => {
            let report = verify(&events, &manifest);
            Ok((events, report))
        }
        Err(broken) => {
            let report = VerifyReport {
                events: 0,
                head_seq: manifest.head_seq,
                tail_seq: None,
                broken: Some(broken),
                manifest_mismatch: None,
            };
            Ok((Vec::new(), report))
        }
    }
}

fn describe(report: &VerifyReport) -> String {
    match (&report.broken, &report.manifest_mismatch) {
        (Some(b), _) => format!("audit log broken at sequence {}: {}", b.seq, b.reason),
        (None, Some(m)) => format!("audit log disagrees with its manifest: {m}"),
        (None, None) => "audit log verified".to_string(),
    }
}

/// The verified log; any break is an integrity error.
pub fn load_audit(store: &Store) -> Result<AuditLog> {
    let (events, report) = audit_status(store)?;
    if !report.ok() {
        return Err(integrity(describe(&report)));
    }
    Ok(AuditLog::from_parts(events, report.head_seq))
}

pub fn verify_report_text(report: &VerifyReport) -> String {
    let tail = report.tail_seq.map_or("-".to_string(), |t| t.to_string());
    format!(
        "{}\nevents={} head_seq={} tail_seq={tail}\n",
        describe(report),
        report.events,
        report.head_seq
    )
}

/// Appends one event: line first, synced, then the manifest.
pub fn append_audit(store: &Store, entry: AuditEntry) -> Result<AuditEvent> {
    let _lock = store.audit_lock()?;
    let mut log = load_audit(store)?;
    let event = log.append(entry).clone();
    store::append_lines(&store.audit_log(), &[event.to_line()])?;
    store::write_json(&store.audit_manifest(), &log.manifest())?;
    Ok(event)
}

/// Compacts under the audit lock; returns whether anything changed.
pub fn compact_audit(store: &Store, retention_days: u32, as_of: Date) -> Result<bool> {
    let _lock = store.audit_lock()?;
    let mut log = load_audit(store)?;
    let changed = log
        .compact(retention_days, as_of)
        .map_err(|e| invalid(e.to_string()))?;
    if changed {
        let lines: String = log.events().iter().map(|e| e.to_line() + "\n").collect();
        store::write_atomic(&store.audit_log(), lines.as_bytes())?;
        store::write_json(&store.audit_manifest(), &log.manifest())?;
    }
    Ok(changed)
}

// ----------------------------------------------------------------- policies

/// Active policies: the last loaded file, else the configured default.
pub fn load_policies(store: &Store, cfg: &Config) -> Result<PolicySet> {
    let active = store.active_policies();
    let path = if active.exists() {
        active
    } else {
        store.config("policies.json")
    };
    let bytes = store::read_bytes(&path)?;
    PolicySet::load(&bytes, &|name| cfg.is_known_object(name))
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn is_admin(policies: &PolicySet, role: &str) -> bool {
    policies.policies.iter().any(|p| {
        p.role == role
            && p.object == ANY
            && matches!(p.territory, gera_core::governance::Territory::Any(_))
    })
}

/// Activates a new policy file. Returns `None` when it is already active.
pub fn load_policy_file(
    store: &Store,
    cfg: &Config,
    role: &str,
    bytes: &[u8],
    as_of: Date,
) -> Result<Option<AuditEvent>> {
    let current = load_policies(store, cfg)?;
    if !is_admin(&current, role) {
        return Err(invalid(format!(
            "role `{role}` may not change policies; it needs an unrestricted `*` policy"
        )));
    }
    let next = PolicySet::load(bytes, &|name| cfg.is_known_object(name))
        .map_err(|e| invalid(e.to_string()))?;
    if next.version == current.version {
        return Ok(None);
    }
    let _lock = store.lock()?;
    store::write_atomic(&store.active_policies(), bytes)?;
    let detail = BTreeMap::from([
        ("old_version".to_string(), current.version.clone()),
        ("new_version".to_string(), next.version.clone()),
    ]);
    let entry = AuditEntry {
        as_of,
        principal: current.principal(role),
        action: Action::AdminPolicyChange,
        object: "policies".to_string(),
        row_count: next.policies.len() as u64,
        policy_version: next.version,
        detail,
    };
    append_audit(store, entry).map(Some)
}

// ----------------------------------------------------------------- sessions

/// A role reading the store, optionally narrowed to some territories.
pub struct Session<'a> {
    pub store: &'a Store,
    pub cfg: &'a Config,
    pub policies: PolicySet,
    pub role: String,
    pub narrow: Option<BTreeSet<String>>,
}

struct Attr<'a>(Option<&'a str>);

impl Territorial for Attr<'_> {
    fn attribute(&self, field: &str) -> Option<&str> {
        if field == TERRITORY_FIELD {
            self.0
        } else {
            None
        }
    }
}

impl<'a> Session<'a> {
    pub fn open(
        store: &'a Store,
        cfg: &'a Config,
        role: &str,
        narrow: &[String],
    ) -> Result<Session<'a>> {
        if role.trim().is_empty() {
            return Err(invalid("a role is required (--role or GERA_ROLE)"));
        }
        let policies = load_policies(store, cfg)?;
        // A broken log refuses every read before any data is touched.
        load_audit(store)?;
        let narrow = (!narrow.is_empty()).then(|| narrow.iter().cloned().collect());
        Ok(Session {
            store,
            cfg,
            policies,
            role: role.to_string(),
            narrow,
        })
    }

    pub fn principal(&self) -> Principal {
        self.policies.principal(&self.role)
    }

    pub fn visible(&self, objects: &[&str], row: &dyn Territorial) -> bool {
        if let Some(narrow) = &self.narrow {
            if !row
                .attribute(TERRITORY_FIELD)
                .is_some_and(|v| narrow.contains(v))
            {
                return false;
            }
        }
        self.policies.allows(&self.role, objects, row)
    }

    fn visible_territory(&self, object: &str, territory: Option<&str>) -> bool {
        self.visible(&[object], &Attr(territory))
    }

    fn audit(
        &self,
        as_of: Date,
        action: Action,
        object: &str,
        row_count: usize,
        mut detail: BTreeMap<String, String>,
    ) -> Result<AuditEvent> {
        if let Some(narrow) = &self.narrow {
            detail.insert(
                "narrowed_to".to_string(),
                narrow.iter().cloned().collect::<Vec<_>>().join(","),
            );
        }
        let entry = AuditEntry {
            as_of,
            principal: self.principal(),
            action,
            object: object.to_string(),
            row_count: row_count as u64,
            policy_version: self.policies.version.clone(),
            detail,
        };
        append_audit(self.store, entry)
    }

    fn replay(&self, as_of: Date) -> Result<Replay> {
        pipeline::replay(self.store, self.cfg, as_of)
    }

    /// Evaluates metrics in order over one replay; one audit event each.
    pub fn eval_metrics(&self, names: &[String], as_of: Date) -> Result<Vec<MetricResult>> {
        for name in names {
            if self.cfg.metrics.get(name).is_none() {
                return Err(invalid(EvalError::UnknownMetric(name.clone()).to_string()));
            }
        }
        let ledger = RunLedger::load(self.store)?;
        if let Err(e) = ledger.require_processed(as_of) {
            let through = ledger
                .processed_through
                .map_or("never".to_string(), |d| d.to_string());
            let missing = EvalError::MissingData {
                as_of: as_of.to_string(),
                processed_through: through,
            };
            return Err(invalid(format!("{missing} ({e})")));
        }
        let replay = self.replay(as_of)?;
        let data = StoreData::new(self.cfg, &replay);
        let mut results = Vec::new();
        for name in names {
            let visible = |source: &str, row: &Row| self.visible(&[source, name.as_str()], row);
            let result = evaluate(&self.cfg.metrics, &self.cfg.catalog, name, &data, &visible)
                .map_err(|e| invalid(e.to_string()))?;
            let detail = BTreeMap::from([(
                "definition_digest".to_string(),
                result.definition_digest.clone(),
            )]);
            self.audit(
                as_of,
                Action::EvaluateMetric,
                name,
                result.rows_used,
                detail,
            )?;
            results.push(result);
        }
        Ok(results)
    }

    pub fn exceptions(&self, as_of: Date, open_only: bool) -> Result<Vec<ExceptionView>> {
        RunLedger::load(self.store)?.require_processed(as_of)?;
        let events: Vec<ExceptionEvent> = store::read_ndjson(&self.store.exceptions())?;
        let book = ExceptionBook::fold(events_through(&events, as_of))
            .map_err(|e| integrity(format!("recon/exceptions.ndjson: {e}")))?;
        let esc = self.cfg.matchspecs.escalation_days;
        let mut views = Vec::new();
        for ex in book.iter() {
            if open_only && !ex.is_open() {
                continue;
            }
            if self.visible_territory("exceptions", ex.territory.as_deref()) {
                views.push(ex.view(as_of, esc).map_err(|e| integrity(e.to_string()))?);
            }
        }
        let detail = BTreeMap::from([("open_only".to_string(), open_only.to_string())]);
        self.audit(
            as_of,
            Action::ReadExceptions,
            "exceptions",
            views.len(),
            detail,
        )?;
        Ok(views)
    }

    pub fn recon_report(&self, as_of: Date) -> Result<ReconReport> {
        let replay = self.replay(as_of)?;
        let engine = &replay.engine;
        let specs: Vec<String> = engine.specs().map(|s| s.name.clone()).collect();
        let lefts: Vec<_> = engine
            .left_rows()
            .into_iter()
            .filter(|r| self.visible_territory("recon_report", r.territory.as_deref()))
            .collect();
        let exceptions = engine
            .book()
            .iter()
            .filter(|e| self.visible_territory("recon_report", e.territory.as_deref()));
        let report =
            ReconReport::from_parts(as_of, engine.escalation_days(), &specs, &lefts, exceptions)
                .map_err(|e| integrity(e.to_string()))?;
        self.audit(
            as_of,
            Action::ReadReport,
            "recon_report",
            lefts.len(),
            BTreeMap::new(),
        )?;
        Ok(report)
    }

    pub fn inventory_aging(&self, as_of: Date) -> Result<AgingReport> {
        let replay = self.replay(as_of)?;
        let full = replay.tracker.ledger().aging_report(as_of);
        let keep = |location: &str| self.visible_territory("inventory_aging", Some(location));
        let keys: Vec<_> = full
            .keys
            .into_iter()
            .filter(|k| keep(&k.location_id))
            .collect();
        let mut totals = BucketTotals::default();
        for k in &keys {
            totals.d0_30 += k.buckets.d0_30;
            totals.d31_60 += k.buckets.d31_60;
            totals.d61_90 += k.buckets.d61_90;
            totals.over_90 += k.buckets.over_90;
        }
        let report = AgingReport {
            snapshot_date: full.snapshot_date,
            totals,
            over_90: full
                .over_90
                .into_iter()
                .filter(|k| keep(&k.location_id))
                .collect(),
            negative_balance: full
                .negative_balance
                .into_iter()
                .filter(|s| keep(series_location(s)))
                .collect(),
            keys,
        };
        self.audit(
            as_of,
            Action::ReadReport,
            "inventory_aging",
            report.keys.len(),
            BTreeMap::new(),
        )?;
        Ok(report)
    }

    /// Investigation queue of the flags this role may see.
    pub fn anomaly_queue(&self, as_of: Date) -> Result<Vec<QueueLine>> {
        let (flags, records) = self.visible_flags(as_of)?;
        let queue = investigation_queue(&flags, &records)
            .map_err(|e| integrity(format!("inventory/dispositions.ndjson: {e}")))?;
        self.audit(
            as_of,
            Action::ReadReport,
            "anomaly_flags",
            queue.len(),
            BTreeMap::new(),
        )?;
        Ok(queue)
    }

    fn visible_flags(&self, as_of: Date) -> Result<(Vec<AnomalyFlag>, Vec<DispositionRecord>)> {
        RunLedger::load(self.store)?.require_processed(as_of)?;
        let flags: Vec<AnomalyFlag> = store::read_ndjson(&self.store.flags())?;
        let flags: Vec<AnomalyFlag> = flags
            .into_iter()
            .filter(|f| {
                f.snapshot_date <= as_of
                    && self.visible_territory("anomaly_flags", Some(series_location(&f.series)))
            })
            .collect();
        let ids: BTreeSet<&str> = flags.iter().map(|f| f.flag_id.as_str()).collect();
        let records: Vec<DispositionRecord> = store::read_ndjson(&self.store.dispositions())?;
        let records = records
            .into_iter()
            .filter(|r| r.as_of <= as_of && ids.contains(r.flag_id.as_str()))
            .collect();
        Ok((flags, records))
    }

    /// Records a disposition on a visible flag, dated on the processed day.
    pub fn dispose(&self, record: DispositionRecord) -> Result<()> {
        let _lock = self.store.lock()?;
        let through = require_current(self.store, record.as_of)?;
        let (flags, _) = self.visible_flags(through)?;
        if !flags.iter().any(|f| f.flag_id == record.flag_id) {
            return Err(invalid(format!(
                "no anomaly flag `{}` visible to role `{}`",
                record.flag_id, self.role
            )));
        }
        store::append_lines(
            &self.store.dispositions(),
            &[serde_json::to_string(&record).expect("serializable")],
        )
    }

    /// Appends a manual exception change after replaying to the processed day.
    pub fn manual_exception(
        &self,
        as_of: Date,
        exception_id: &str,
        change: Change,
    ) -> Result<ExceptionEvent> {
        let _lock = self.store.lock()?;
        require_current(self.store, as_of)?;
        let replay = self.replay(as_of)?;
        let visible = replay
            .engine
            .book()
            .get(exception_id)
            .is_some_and(|e| self.visible_territory("exceptions", e.territory.as_deref()));
        if !visible {
            return Err(invalid(format!(
                "no exception `{exception_id}` visible to role `{}`",
                self.role
            )));
        }
        let event = replay
            .engine
            .manual_event(exception_id, change)
            .map_err(|e| invalid(e.to_string()))?;
        store::append_lines(
            &self.store.exceptions(),
            &[serde_json::to_string(&event).expect("serializable")],
        )?;
        Ok(event)
    }
}

/// Manual actions are dated on the last processed day only.
fn require_current(store: &Store, as_of: Date) -> Result<Date> {
    let ledger = RunLedger::load(store)?;
    match ledger.processed_through {
        Some(d) if d == as_of => Ok(d),
        Some(d) => Err(invalid(format!(
            "manual actions must be dated on the last processed day {d}, not {as_of}"
        ))),
        None => Err(invalid("nothing processed yet")),
    }
}

fn series_location(series: &str) -> &str {
    series.rsplit_once('|').map_or(series, |(_, loc)| loc)
}

/// One metric result as a single canonical JSON line.
pub fn metric_line(result: &MetricResult) -> String {
    canonical_json(result)
}

pub fn metric_text(result: &MetricResult) -> String {
    let show = |v: &Option<rust_decimal::Decimal>| {
        v.map_or("null".to_string(), |d| d.normalize().to_string())
    };
    match &result.groups {
        None => format!(
            "{} as_of {} = {}\n",
            result.metric,
            result.as_of,
            show(&result.value)
        ),
        Some(groups) => {
            let mut out = format!("{} as_of {}\n", result.metric, result.as_of);
            for g in groups {
                let key: Vec<String> = g.key.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!("  {} = {}\n", key.join(" "), show(&g.value)));
            }
            out
        }
    }
}

// ------------------------------------------------------------- metric data

/// Metric sources drawn from one replay.
pub struct StoreData<'a> {
    replay: &'a Replay,
    derived_version: String,
}

impl<'a> StoreData<'a> {
    pub fn new(cfg: &Config, replay: &'a Replay) -> StoreData<'a> {
        StoreData {
            replay,
            derived_version: format!("replay@{}", &cfg.replay_digest()[..12]),
        }
    }

    fn derived(&self, source: &str, fields: BTreeMap<String, String>) -> Row {
        Row {
            fields,
            source_id: source.to_string(),
            config_version: self.derived_version.clone(),
        }
    }

    fn entity_rows(&self, kind: EntityKind) -> Vec<Row> {
        let mut dedup = Deduper::default();
        let mut rows = Vec::new();
        for (_, record) in &self.replay.staged {
            if record.entity_kind != kind || !record.is_pass() || dedup.admit(record).is_err() {
                continue;
            }
            let mut fields = record.fields.clone();
            if let Some(d) = record.event_date {
                fields.insert("event_date".into(), d.to_string());
            }
            fields.insert("lineage_id".into(), record.lineage_id.clone());
            fields.insert("source_id".into(), record.source_id.clone());
            rows.push(Row {
                fields,
                source_id: record.source_id.clone(),
                config_version: record.config_version.clone(),
            });
        }
        rows
    }
}

fn put(fields: &mut BTreeMap<String, String>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        fields.insert(key.to_string(), v);
    }
}

impl MetricData for StoreData<'_> {
    fn as_of(&self) -> Date {
        self.replay.as_of
    }

    fn rows(&self, source: &str) -> Result<Vec<Row>, EvalError> {
        if source == "activations" {
            return Ok(self.entity_rows(EntityKind::ProvisioningEvent));
        }
        if let Ok(kind) = source.parse::<EntityKind>() {
            return Ok(self.entity_rows(kind));
        }
        let as_of = self.replay.as_of;
        let rows = match source {
            "recon_left" => self
                .replay
                .engine
                .left_rows()
                .into_iter()
                .map(|r| {
                    let mut f = BTreeMap::new();
                    f.insert("spec".into(), r.spec.clone());
                    f.insert("lineage_id".into(), r.lineage_id.clone());
                    f.insert("entity_kind".into(), r.entity_kind.to_string());
                    f.insert("event_date".into(), r.event_date.to_string());
                    f.insert("natural_key".into(), r.natural_key.clone());
                    put(&mut f, "location_id", r.territory.clone());
                    f.insert("state".into(), r.state.as_str().to_string());
                    put(&mut f, "counterpart", r.counterpart.clone());
                    f.insert(
                        "matched".into(),
                        (r.state == LeftState::Matched).to_string(),
                    );
                    let eligible = matches!(
                        r.state,
                        LeftState::Matched | LeftState::Open | LeftState::MatchedLate
                    );
                    f.insert("eligible".into(), eligible.to_string());
                    self.derived("recon", f)
                })
                .collect(),
            "exceptions" => {
                let esc = self.replay.engine.escalation_days();
                let mut rows = Vec::new();
                for ex in self.replay.engine.book().iter() {
                    let view = ex.view(as_of, esc).map_err(|e| EvalError::Source {
                        name: source.into(),
                        message: e.to_string(),
                    })?;
                    let mut f = BTreeMap::new();
                    f.insert("exception_id".into(), ex.exception_id.clone());
                    f.insert("spec".into(), ex.spec.clone());
                    f.insert("lineage_id".into(), ex.lineage_id.clone());
                    f.insert("entity_kind".into(), ex.entity_kind.to_string());
                    f.insert("category".into(), ex.category.as_str().to_string());
                    f.insert("status".into(), ex.status.as_str().to_string());
                    f.insert("opened_as_of".into(), ex.opened_as_of.to_string());
                    f.insert("natural_key".into(), ex.natural_key.clone());
                    put(&mut f, "location_id", ex.territory.clone());
                    put(&mut f, "owner", ex.owner.clone());
                    f.insert("age_days".into(), view.age_days.to_string());
                    f.insert("escalated".into(), view.escalated.to_string());
                    rows.push(self.derived("recon", f));
                }
                rows
            }
            "inventory_lots" => self
                .replay
                .tracker
                .ledger()
                .lots(as_of)
                .into_iter()
                .map(|lot| {
                    let f = BTreeMap::from([
                        ("material_code".to_string(), lot.material_code),
                        ("location_id".to_string(), lot.location_id),
                        ("received_date".to_string(), lot.received_date.to_string()),
                        ("remaining_qty".to_string(), lot.remaining_qty.to_string()),
                        ("age_days".to_string(), lot.age_days.to_string()),
                        ("bucket".to_string(), lot.bucket.as_str().to_string()),
                    ]);
                    self.derived("inventory", f)
                })
                .collect(),
            "inventory_snapshots" => self
                .replay
                .snapshots
                .iter()
                .filter(|s| s.is_pass())
                .map(|s| {
                    let f = BTreeMap::from([
                        ("snapshot_date".to_string(), s.snapshot_date.to_string()),
                        ("material_code".to_string(), s.material_code.clone()),
                        ("location_id".to_string(), s.location_id.clone()),
                        (
                            "quantity_on_hand".to_string(),
                            s.quantity_on_hand.to_string(),
                        ),
                    ]);
                    self.derived("inventory", f)
                })
                .collect(),
            other => {
                return Err(EvalError::Source {
                    name: other.to_string(),
                    message: "no such source in this store".to_string(),
                })
            }
        };
        Ok(rows)
    }
}
