use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DriftChange, FaultKind, ScenarioConfig, SynthError, TYPO_EARLIEST_DAY};
use super::manifest::{Expected, ExpectedException, FaultRecord, GroundTruthManifest};
use crate::date::{add_days, Date};
use crate::digest::canonical_digest;
use crate::entity::EntityKind;
use crate::reconcile::{Category, MatchSpecSet, Status};
use crate::staging::Crosswalk;

pub const REGIONS: [&str; 4] = ["NE", "NW", "SE", "SW"];
/// Daily receipts per series.
pub const DAILY_RECEIPT: i64 = 20;
/// Opening stock per series.
pub const BASE_LEVEL: i64 = 100;
/// Clean on-hand cycle around [`BASE_LEVEL`]; small enough that no detector fires.
pub const LEVEL_CYCLE: [i64; 6] = [0, 2, 4, 6, 4, 2];
pub const CROSSWALK_NAME: &str = "circuit_to_account";

pub const SRC_ORDERS: &str = "oss_orders";
pub const SRC_PROVISIONING: &str = "oss_provisioning";
pub const SRC_BILLING: &str = "billing";
pub const SRC_PAYMENTS: &str = "payments";
pub const SRC_SUPPLY: &str = "erp_supply";
pub const SRC_FIELD: &str = "field_contractor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractFormat {
    Csv,
    Ndjson,
}

/// One source file: a partition of one entity kind from one source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extract {
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub as_of: Date,
    pub format: ExtractFormat,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Extract {
    /// Relative path: `<as_of>/<source>.<entity>.<ext>`.
    pub fn path(&self) -> String {
        let ext = match self.format {
            ExtractFormat::Csv => "csv",
            ExtractFormat::Ndjson => "ndjson",
        };
        format!(
            "{}/{}.{}.{ext}",
            self.as_of, self.source_id, self.entity_kind
        )
    }

    pub fn batch_key(&self) -> String {
        batch_key(&self.source_id, self.entity_kind, self.as_of)
    }
}

pub fn batch_key(source_id: &str, kind: EntityKind, as_of: Date) -> String {
    format!("{source_id}/{kind}/{as_of}")
}

pub struct Scenario {
    /// Sorted by (as_of, source, entity).
    pub extracts: Vec<Extract>,
    pub crosswalk: Crosswalk,
    pub manifest: GroundTruthManifest,
}

fn layout(kind: EntityKind) -> (&'static str, ExtractFormat, &'static [&'static str]) {
    use ExtractFormat::{Csv, Ndjson};
    match kind {
        EntityKind::ServiceOrder => (
            SRC_ORDERS,
            Csv,
            &[
                "order_id",
                "subscriber_id",
                "location_id",
                "status",
                "plan",
                "order_date",
            ],
        ),
        EntityKind::ProvisioningEvent => (
            SRC_PROVISIONING,
            Csv,
            &[
                "order_id",
                "circuit_id",
                "subscriber_id",
                "location_id",
                "status",
                "trial",
                "activated_at",
            ],
        ),
        EntityKind::InvoiceLine => (
            SRC_BILLING,
            Csv,
            &[
                "invoice_id",
                "order_id",
                "acct",
                "subscriber_id",
                "location_id",
                "amount",
                "invoice_date",
            ],
        ),
        EntityKind::PaymentSettlement => (
            SRC_PAYMENTS,
            Ndjson,
            &[
                "payment_ref",
                "invoice_id",
                "subscriber_id",
                "location_id",
                "amount",
                "settled_on",
            ],
        ),
        EntityKind::PurchaseOrder => (
            SRC_SUPPLY,
            Csv,
            &["po_id", "material", "location_id", "quantity", "po_date"],
        ),
        EntityKind::Receiving => (
            SRC_SUPPLY,
            Csv,
            &[
                "receipt_id",
                "po_id",
                "material",
                "location_id",
                "quantity",
                "received",
            ],
        ),
        EntityKind::Issuance => (
            SRC_SUPPLY,
            Csv,
            &[
                "issue_id",
                "po_id",
                "material",
                "location_id",
                "quantity",
                "issued",
            ],
        ),
        EntityKind::Installation => (
            SRC_FIELD,
            Ndjson,
            &[
                "install_id",
                "po_id",
                "material_code",
                "location_id",
                "quantity",
                "cost",
                "passings",
                "installed_on",
            ],
        ),
        EntityKind::InventoryMovement => (
            SRC_SUPPLY,
            Csv,
            &[
                "movement_id",
                "material",
                "location_id",
                "quantity",
                "moved",
            ],
        ),
    }
}

#[derive(Default)]
struct Extracts {
    files: BTreeMap<(Date, String, EntityKind), Extract>,
    rows: BTreeMap<EntityKind, u64>,
}

impl Extracts {
    fn push(&mut self, kind: EntityKind, as_of: Date, row: Vec<String>) {
        let (source, format, columns) = layout(kind);
        debug_assert_eq!(row.len(), columns.len());
        *self.rows.entry(kind).or_default() += 1;
        self.files
            .entry((as_of, source.to_string(), kind))
            .or_insert_with(|| Extract {
                source_id: source.to_string(),
                entity_kind: kind,
                as_of,
                format,
                columns: columns.iter().map(|c| c.to_string()).collect(),
                rows: Vec::new(),
            })
            .rows
            .push(row);
    }
}

fn us_date(d: Date) -> String {
    format!("{:02}/{:02}/{}", d.month(), d.day(), d.year())
}

struct Subscriber {
    id: String,
    order_id: String,
    region: &'static str,
    circuit: String,
    account: String,
    ordered: Date,
    activated: Date,
    invoiced: Date,
    settled: Date,
}

struct Receipt {
    series: usize,
    day: u32,
    extract_row: (Date, usize),
    receipt_id: String,
}

pub fn material_code(m: u32) -> String {
    format!("{}", 1001 + 7 * m)
}

pub fn series_key(material: &str, location: &str) -> String {
    format!("{material}|{location}")
}

fn window(specs: &MatchSpecSet, name: &str) -> u32 {
    specs.get(name).and_then(|s| s.window_days).unwrap_or(0)
}

/// Deterministic scenario: identical configs give identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let specs = MatchSpecSet::builtin();
    let billing_window = window(&specs, "activation_billing");
    let install_window = window(&specs, "issuance_installation");
    let mut out = Extracts::default();
    let mut faults: Vec<FaultRecord> = Vec::new();
    let mut crosswalk = Crosswalk {
        name: CROSSWALK_NAME.to_string(),
        source_pattern: "##########".to_string(),
        target_pattern: "@@##########".to_string(),
        entries: BTreeMap::new(),
        merged: BTreeSet::new(),
    };
    let mut settles_by = cfg.start;

    let mut subs = Vec::with_capacity(cfg.subscribers as usize);
    for i in 0..cfg.subscribers {
        let region = REGIONS[rng.gen_range(0..REGIONS.len())];
        let circuit = format!("{}", 4_150_000_000u64 + u64::from(i));
        let ordered = add_days(cfg.start, rng.gen_range(0..i64::from(cfg.days)));
        let activated = add_days(ordered, rng.gen_range(0..=3));
        let invoiced = add_days(
            activated,
            rng.gen_range(1..=i64::from(cfg.billing_cycle_days)),
        );
        let settled = add_days(invoiced, rng.gen_range(1..=15));
        subs.push(Subscriber {
            id: format!("SUB-{:06}", i + 1),
            order_id: format!("SO-{:06}", i + 1),
            region,
            account: format!("{region}{circuit}"),
            circuit,
            ordered,
            activated,
            invoiced,
            settled,
        });
    }

    let mut shuffled: Vec<usize> = (0..subs.len()).collect();
    shuffled.shuffle(&mut rng);
    let mut take = |kind: FaultKind| -> Result<Vec<usize>, SynthError> {
        let n = cfg
            .fault(kind)
            .map(|f| f.resolve(shuffled.len() as u32))
            .transpose()?
            .unwrap_or(0) as usize;
        let chosen: Vec<usize> = shuffled.drain(..n).collect();
        Ok(chosen)
    };
    let silent: BTreeSet<usize> = take(FaultKind::SilentMappingFailure)?.into_iter().collect();
    let late: BTreeSet<usize> = take(FaultKind::LateArrival)?.into_iter().collect();
    let late_days = cfg
        .fault(FaultKind::LateArrival)
        .map(|f| i64::from(f.late_days()))
        .unwrap_or(0);

    for (i, s) in subs.iter().enumerate() {
        let plan = ["basic", "plus", "max"][rng.gen_range(0..3)];
        let amount = ["39.99", "59.99", "79.99"][rng.gen_range(0..3)];
        let trial = rng.gen_bool(0.1);
        let (hh, mm, ss) = (
            rng.gen_range(10..=23),
            rng.gen_range(0..60),
            rng.gen_range(0..60),
        );
        let lower_acct = rng.gen_bool(0.2);
        crosswalk
            .entries
            .insert(s.circuit.clone(), s.account.clone());
        if cfg.sources.orders {
            out.push(
                EntityKind::ServiceOrder,
                s.ordered,
                vec![
                    s.order_id.clone(),
                    s.id.clone(),
                    s.region.into(),
                    "active".into(),
                    plan.into(),
                    s.ordered.to_string(),
                ],
            );
        }
        if cfg.sources.provisioning {
            let ts = format!("{}T{hh:02}:{mm:02}:{ss:02}+00:00", s.activated);
            out.push(
                EntityKind::ProvisioningEvent,
                s.activated,
                vec![
                    s.order_id.clone(),
                    s.circuit.clone(),
                    s.id.clone(),
                    s.region.into(),
                    "active".into(),
                    trial.to_string(),
                    ts,
                ],
            );
            settles_by = settles_by.max(add_days(s.activated, i64::from(billing_window) + 1));
        }
        let invoice_id = format!("INV-{:06}", i + 1);
        if silent.contains(&i) {
            faults.push(FaultRecord {
                kind: FaultKind::SilentMappingFailure,
                target: EntityKind::InvoiceLine,
                source_id: SRC_BILLING.into(),
                partition: s.invoiced,
                affected: vec![s.account.clone(), s.id.clone()],
                expected: Expected::Exception(ExpectedException {
                    spec: "activation_billing".into(),
                    category: Category::Unmatched,
                    status: Status::Open,
                    natural_key: s.account.clone(),
                }),
            });
            continue;
        }
        let delay = if late.contains(&i) { late_days } else { 0 };
        let invoice_partition = add_days(s.invoiced, delay);
        if late.contains(&i) {
            // Matching runs before expiry on the arrival day, so only an
            // arrival after the first expired day leaves an exception.
            let expiry_day = add_days(s.activated, i64::from(billing_window) + 1);
            let expected = if invoice_partition > expiry_day {
                Expected::Exception(ExpectedException {
                    spec: "activation_billing".into(),
                    category: Category::Unmatched,
                    status: Status::MatchedLate,
                    natural_key: s.account.clone(),
                })
            } else {
                Expected::Matched {
                    spec: "activation_billing".into(),
                    natural_key: s.account.clone(),
                }
            };
            faults.push(FaultRecord {
                kind: FaultKind::LateArrival,
                target: EntityKind::InvoiceLine,
                source_id: SRC_BILLING.into(),
                partition: invoice_partition,
                affected: vec![invoice_id.clone(), s.account.clone()],
                expected,
            });
        }
        if cfg.sources.billing {
            let acct = if lower_acct {
                s.account.to_lowercase()
            } else {
                s.account.clone()
            };
            out.push(
                EntityKind::InvoiceLine,
                invoice_partition,
                vec![
                    invoice_id.clone(),
                    s.order_id.clone(),
                    acct,
                    s.id.clone(),
                    s.region.into(),
                    amount.into(),
                    us_date(s.invoiced),
                ],
            );
            settles_by = settles_by.max(invoice_partition);
        }
        if cfg.sources.payments {
            // A payment never precedes its invoice, or it would open as an orphan.
            let partition = add_days(s.settled, delay).max(invoice_partition);
            out.push(
                EntityKind::PaymentSettlement,
                partition,
                vec![
                    format!("PAY-{:06}", i + 1),
                    invoice_id,
                    s.id.clone(),
                    s.region.into(),
                    amount.into(),
                    s.settled.to_string(),
                ],
            );
            settles_by = settles_by.max(partition);
        }
    }

    if cfg.sources.supply_chain {
        supply_chain(
            cfg,
            &mut rng,
            &mut out,
            &mut faults,
            &mut settles_by,
            install_window,
        )?;
    }

    let first_partition = out.files.keys().next().map(|k| k.0).unwrap_or(cfg.start);
    let last_partition = out
        .files
        .keys()
        .next_back()
        .map(|k| k.0)
        .unwrap_or(cfg.start);
    let manifest = GroundTruthManifest {
        seed: cfg.seed,
        config_digest: canonical_digest(cfg),
        first_partition,
        last_partition,
        settles_by: settles_by.max(last_partition),
        rows: out.rows,
        faults,
    };
    Ok(Scenario {
        extracts: out.files.into_values().collect(),
        crosswalk,
        manifest,
    })
}

fn supply_chain(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Extracts,
    faults: &mut Vec<FaultRecord>,
    settles_by: &mut Date,
    install_window: u32,
) -> Result<(), SynthError> {
    let days = cfg.supply_days();
    let series: Vec<(String, &str)> = (0..cfg.supply.materials)
        .flat_map(|m| REGIONS.iter().map(move |r| (material_code(m), *r)))
        .collect();
    let p = |t: u32| LEVEL_CYCLE[(t % 6) as usize];
    let mut receipts: Vec<Receipt> = Vec::new();
    let mut installs: BTreeMap<Date, Vec<String>> = BTreeMap::new();

    for t in 0..days {
        let day = add_days(cfg.start, i64::from(t));
        for (s, (material, loc)) in series.iter().enumerate() {
            let received = if t == 0 {
                BASE_LEVEL + DAILY_RECEIPT
            } else {
                DAILY_RECEIPT
            };
            let issued = if t == 0 {
                DAILY_RECEIPT - p(0)
            } else {
                DAILY_RECEIPT + p(t - 1) - p(t)
            };
            let padded = format!("00{material}");
            let po = format!("PO-R{s:02}-{t:04}");
            out.push(
                EntityKind::PurchaseOrder,
                day,
                vec![
                    po.clone(),
                    padded.clone(),
                    loc.to_string(),
                    received.to_string(),
                    day.to_string(),
                ],
            );
            let receipt_id = format!("RC{s:02}{t:04}");
            let row = out
                .files
                .get(&(day, SRC_SUPPLY.to_string(), EntityKind::Receiving))
                .map_or(0, |e| e.rows.len());
            receipts.push(Receipt {
                series: s,
                day: t,
                extract_row: (day, row),
                receipt_id: receipt_id.clone(),
            });
            out.push(
                EntityKind::Receiving,
                day,
                vec![
                    receipt_id,
                    po,
                    padded,
                    loc.to_string(),
                    received.to_string(),
                    day.to_string(),
                ],
            );

            let work_order = format!("PO-I{s:02}-{t:04}");
            out.push(
                EntityKind::Issuance,
                day,
                vec![
                    format!("IS{s:02}{t:04}"),
                    work_order.clone(),
                    material.clone(),
                    loc.to_string(),
                    issued.to_string(),
                    day.to_string(),
                ],
            );
            let installed = add_days(day, rng.gen_range(0..=5));
            let passings = rng.gen_range(1..=8);
            let unit_cents = 1250 + 25 * s as i64;
            let cents = unit_cents * issued;
            out.push(
                EntityKind::Installation,
                installed,
                vec![
                    format!("IN{s:02}{t:04}"),
                    work_order.clone(),
                    material.clone(),
                    loc.to_string(),
                    issued.to_string(),
                    format!("{}.{:02}", cents / 100, cents % 100),
                    passings.to_string(),
                    installed.to_string(),
                ],
            );
            installs
                .entry(installed)
                .or_default()
                .push(series_key(&work_order, material));
            *settles_by = (*settles_by)
                .max(installed)
                .max(add_days(day, i64::from(install_window) + 1));
        }
    }

    let receiving_source = SRC_SUPPLY.to_string();
    if let Some(spec) = cfg.fault(FaultKind::QuantityTypo) {
        let n = spec.resolve(series.len() as u32)?;
        let mut order: Vec<usize> = (0..series.len()).collect();
        order.shuffle(rng);
        let mut chosen: Vec<usize> = order[..n as usize].to_vec();
        chosen.sort_unstable();
        for s in chosen {
            let t = rng.gen_range(TYPO_EARLIEST_DAY..days);
            let receipt = receipts
                .iter()
                .find(|r| r.series == s && r.day == t)
                .expect("one receipt per series and day");
            let extract = out
                .files
                .get_mut(&(
                    receipt.extract_row.0,
                    receiving_source.clone(),
                    EntityKind::Receiving,
                ))
                .expect("receipt extract");
            let row = &mut extract.rows[receipt.extract_row.1];
            let quantity: i64 = row[4].parse().expect("generated quantity");
            row[4] = (quantity * spec.multiplier()).to_string();
            let (material, loc) = &series[s];
            faults.push(FaultRecord {
                kind: FaultKind::QuantityTypo,
                target: EntityKind::Receiving,
                source_id: receiving_source.clone(),
                partition: receipt.extract_row.0,
                affected: vec![receipt.receipt_id.clone()],
                expected: Expected::Flag {
                    series: series_key(material, loc),
                    snapshot_date: receipt.extract_row.0,
                },
            });
        }
    }
    let typo_rows: BTreeSet<String> = faults
        .iter()
        .filter(|f| f.kind == FaultKind::QuantityTypo)
        .flat_map(|f| f.affected.iter().cloned())
        .collect();

    if let Some(spec) = cfg.fault(FaultKind::DuplicateFanout) {
        let candidates: Vec<&Receipt> = receipts
            .iter()
            .filter(|r| !typo_rows.contains(&r.receipt_id))
            .collect();
        let n = spec.resolve(candidates.len() as u32)? as usize;
        let mut picks: Vec<&Receipt> = candidates.choose_multiple(rng, n).copied().collect();
        // Insert from the bottom so recorded row positions stay valid.
        picks.sort_by_key(|r| core::cmp::Reverse(r.extract_row));
        for r in picks {
            let extract = out
                .files
                .get_mut(&(
                    r.extract_row.0,
                    receiving_source.clone(),
                    EntityKind::Receiving,
                ))
                .expect("receipt extract");
            let row = extract.rows[r.extract_row.1].clone();
            for _ in 0..spec.copies() {
                extract.rows.insert(r.extract_row.1 + 1, row.clone());
                *out.rows.entry(EntityKind::Receiving).or_default() += 1;
            }
            faults.push(FaultRecord {
                kind: FaultKind::DuplicateFanout,
                target: EntityKind::Receiving,
                source_id: receiving_source.clone(),
                partition: r.extract_row.0,
                affected: vec![r.receipt_id.clone()],
                expected: Expected::Exception(ExpectedException {
                    spec: "dedup:receiving".into(),
                    category: Category::Duplicate,
                    status: Status::Open,
                    natural_key: r.receipt_id.clone(),
                }),
            });
        }
    }

    if let Some(spec) = cfg.fault(FaultKind::SchemaDrift) {
        let dates: Vec<Date> = installs.keys().copied().collect();
        let n = spec.resolve(dates.len() as u32)? as usize;
        let mut picks: Vec<Date> = dates.choose_multiple(rng, n).copied().collect();
        picks.sort_unstable();
        let field = spec.drift_field();
        let blocking = match spec.change() {
            DriftChange::Add => false,
            DriftChange::Drop => EntityKind::Installation
                .field(&field)
                .map_or(field == "installed_on", |f| f.required),
        };
        for date in picks {
            let extract = out
                .files
                .get_mut(&(date, SRC_FIELD.to_string(), EntityKind::Installation))
                .expect("installation extract");
            match spec.change() {
                DriftChange::Add => {
                    extract.columns.push(field.clone());
                    for row in &mut extract.rows {
                        row.push("ok".into());
                    }
                }
                DriftChange::Drop => {
                    if let Some(ix) = extract.columns.iter().position(|c| *c == field) {
                        extract.columns.remove(ix);
                        for row in &mut extract.rows {
                            row.remove(ix);
                        }
                    }
                }
            }
            let collateral = if blocking {
                installs[&date]
                    .iter()
                    .map(|key| ExpectedException {
                        spec: "issuance_installation".into(),
                        category: Category::Unmatched,
                        status: Status::Open,
                        natural_key: key.clone(),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            faults.push(FaultRecord {
                kind: FaultKind::SchemaDrift,
                target: EntityKind::Installation,
                source_id: SRC_FIELD.into(),
                partition: date,
                affected: extract
                    .rows
                    .iter()
                    .filter_map(|r| r.first().cloned())
                    .collect(),
                expected: Expected::Drift {
                    batch: batch_key(SRC_FIELD, EntityKind::Installation, date),
                    blocking,
                    collateral,
                },
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::parse_iso;
    use crate::synth::FaultSpec;

    fn config(subscribers: u32, faults: Vec<FaultSpec>) -> ScenarioConfig {
        ScenarioConfig {
            seed: 11,
            subscribers,
            start: parse_iso("2026-01-01").unwrap(),
            days: 20,
            billing_cycle_days: 20,
            sources: Default::default(),
            supply: Default::default(),
            faults,
        }
    }

    fn count(s: &Scenario, kind: EntityKind) -> usize {
        s.extracts
            .iter()
            .filter(|e| e.entity_kind == kind)
            .map(|e| e.rows.len())
            .sum()
    }

    #[test]
    fn silent_mapping_failures_drop_invoices() {
        let s = generate(&config(
            500,
            vec![FaultSpec::new(FaultKind::SilentMappingFailure, 25)],
        ))
        .unwrap();
        assert_eq!(count(&s, EntityKind::ProvisioningEvent), 500);
        assert_eq!(count(&s, EntityKind::InvoiceLine), 475);
        assert_eq!(count(&s, EntityKind::PaymentSettlement), 475);
        let keys: BTreeSet<&str> = s
            .manifest
            .records(FaultKind::SilentMappingFailure)
            .filter_map(|f| f.expected.score_key())
            .collect();
        assert_eq!(keys.len(), 25);
        assert_eq!(s.crosswalk.entries.len(), 500);
        assert!(s.crosswalk.validate().is_ok());
    }

    #[test]
    fn identical_configs_give_identical_output() {
        let cfg = config(
            50,
            vec![
                FaultSpec::new(FaultKind::QuantityTypo, 2),
                FaultSpec::new(FaultKind::DuplicateFanout, 3),
            ],
        );
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.extracts, b.extracts);
        assert_eq!(a.manifest, b.manifest);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(generate(&other).unwrap().extracts, a.extracts);
    }

    #[test]
    fn clean_levels_follow_the_cycle() {
        let s = generate(&config(0, vec![])).unwrap();
        let mut level: BTreeMap<(String, String), i64> = BTreeMap::new();
        let mut by_day: BTreeMap<Date, Vec<&Extract>> = BTreeMap::new();
        for e in &s.extracts {
            by_day.entry(e.as_of).or_default().push(e);
        }
        for (t, (_, extracts)) in by_day.iter().enumerate().take(65) {
            for e in extracts {
                let sign = match e.entity_kind {
                    EntityKind::Receiving => 1,
                    EntityKind::Issuance => -1,
                    _ => continue,
                };
                for row in &e.rows {
                    let material = row[2].trim_start_matches('0').to_string();
                    *level.entry((material, row[3].clone())).or_default() +=
                        sign * row[4].parse::<i64>().unwrap();
                }
            }
            for v in level.values() {
                assert_eq!(*v, BASE_LEVEL + LEVEL_CYCLE[t % 6]);
            }
        }
        assert_eq!(level.len(), 12);
    }

    #[test]
    fn faults_are_recorded_per_instance() {
        let mut typo = FaultSpec::new(FaultKind::QuantityTypo, 1);
        typo.multiplier = Some(10);
        let mut drift = FaultSpec::new(FaultKind::SchemaDrift, 1);
        drift.change = Some(DriftChange::Drop);
        let mut late = FaultSpec::new(FaultKind::LateArrival, 4);
        late.days = Some(40);
        let s = generate(&config(
            40,
            vec![
                typo,
                drift,
                FaultSpec::new(FaultKind::DuplicateFanout, 2),
                late,
            ],
        ))
        .unwrap();
        let m = &s.manifest;
        assert_eq!(m.records(FaultKind::QuantityTypo).count(), 1);
        assert_eq!(m.records(FaultKind::DuplicateFanout).count(), 2);
        assert_eq!(m.records(FaultKind::LateArrival).count(), 4);
        assert!(m.records(FaultKind::LateArrival).all(
            |f| matches!(&f.expected, Expected::Exception(e) if e.status == Status::MatchedLate)
        ));
        let drift = m.records(FaultKind::SchemaDrift).next().unwrap();
        let Expected::Drift {
            blocking,
            collateral,
            ..
        } = &drift.expected
        else {
            panic!()
        };
        assert!(*blocking);
        assert!(!collateral.is_empty());
        let extract = s
            .extracts
            .iter()
            .find(|e| e.batch_key() == drift.expected.score_key().unwrap())
            .unwrap();
        assert!(!extract.columns.iter().any(|c| c == "install_id"));
        let receiving = count(&s, EntityKind::Receiving) as u64;
        assert_eq!(m.rows[&EntityKind::Receiving], receiving);
        assert!(m.settles_by >= m.last_partition);
        let json = serde_json::to_string(m).unwrap();
        assert_eq!(
            &serde_json::from_str::<GroundTruthManifest>(&json).unwrap(),
            m
        );
    }
}
