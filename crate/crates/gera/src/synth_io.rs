//! Scenario files on disk, loading them into a store, and scoring a store
//! against the scenario's ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use gera_core::date::Date;
use gera_core::inventory::series_label;
use gera_core::reconcile::natural_key;
use gera_core::synth::{
    score, EngineOutputs, ExceptionSummary, Extract, ExtractFormat, FaultKind, GroundTruthManifest,
    Scenario, ScoreReport, CROSSWALK_NAME,
};
use gera_core::EntityKind;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{invalid, GeraError, Result};
use crate::pipeline::{self, Replay};
use crate::raw::{self, IngestOutcome, IngestRequest, RawManifest, SourceFormat};
use crate::store::{self, Store};

pub const INDEX_FILE: &str = "extracts.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn crosswalk_file() -> String {
    format!("crosswalk.{CROSSWALK_NAME}.json")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub as_of: Date,
}

pub fn extract_bytes(extract: &Extract) -> Vec<u8> {
    match extract.format {
        ExtractFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&extract.columns).expect("in-memory write");
            for row in &extract.rows {
                w.write_record(row).expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
        ExtractFormat::Ndjson => {
            let mut out = String::new();
            for row in &extract.rows {
                let pairs: Vec<String> = extract
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(k, v)| {
                        format!(
                            "{}:{}",
                            serde_json::Value::from(k.as_str()),
                            serde_json::Value::from(v.as_str())
                        )
                    })
                    .collect();
                out.push('{');
                out.push_str(&pairs.join(","));
                out.push_str("}\n");
            }
            out.into_bytes()
        }
    }
}

/// Writes extracts, the crosswalk, the ground truth and an index.
pub fn write_scenario(scenario: &Scenario, out: &Path) -> Result<usize> {
    let mut index = Vec::new();
    for extract in &scenario.extracts {
        let rel = extract.path();
        store::write_atomic(&out.join(&rel), &extract_bytes(extract))?;
        index.push(IndexEntry {
            path: rel,
            source_id: extract.source_id.clone(),
            entity_kind: extract.entity_kind,
            as_of: extract.as_of,
        });
    }
    store::write_json(&out.join(crosswalk_file()), &scenario.crosswalk)?;
    store::write_json(&out.join(MANIFEST_FILE), &scenario.manifest)?;
    store::write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index.len())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub files: usize,
    pub records: usize,
    pub duplicates: usize,
}

/// Installs the scenario crosswalk and ingests extracts dated through
/// `through`. The caller holds the store lock.
pub fn load(store: &Store, dir: &Path, through: Option<Date>) -> Result<LoadSummary> {
    let index: Vec<IndexEntry> = store::read_json(&dir.join(INDEX_FILE))?;
    let crosswalk = store::read_bytes(&dir.join(crosswalk_file()))?;
    store::write_atomic(
        &store
            .config("crosswalks")
            .join(format!("{CROSSWALK_NAME}.json")),
        &crosswalk,
    )?;
    let cfg = Config::load(store)?;
    let mut summary = LoadSummary::default();
    for entry in index
        .iter()
        .filter(|e| through.is_none_or(|t| e.as_of <= t))
    {
        let path = dir.join(&entry.path);
        let bytes = store::read_bytes(&path)?;
        let req = IngestRequest {
            bytes: &bytes,
            format: SourceFormat::from_path(&path)?,
            source_id: &entry.source_id,
            entity_kind: entry.entity_kind,
            as_of: entry.as_of,
        };
        match raw::ingest(store, &cfg.rules, &req)? {
            IngestOutcome::Written(receipt) => {
                summary.files += 1;
                summary.records += receipt.records_written;
                summary.duplicates += usize::from(receipt.duplicate_of.is_some());
            }
            IngestOutcome::Rejected(rejected) => {
                return Err(invalid(format!("{}: {rejected}", path.display())))
            }
        }
    }
    Ok(summary)
}

/// Engine outputs as the scorer sees them.
pub fn engine_outputs(store: &Store, replay: &Replay) -> Result<EngineOutputs> {
    let engine = &replay.engine;
    let exceptions = engine
        .book()
        .iter()
        .map(|e| ExceptionSummary {
            spec: e.spec.clone(),
            category: e.category,
            status: e.status,
            natural_key: e.natural_key.clone(),
        })
        .collect();
    let flagged_series = replay.flags.iter().map(|f| f.series.clone()).collect();
    let drift_batches = replay
        .staging
        .iter()
        .flat_map(|d| d.batches.iter())
        .filter(|b| b.drift.as_ref().is_some_and(|d| !d.is_clean()))
        .map(|b| b.batch_key())
        .collect();

    let mut universe: BTreeMap<FaultKind, BTreeSet<String>> = BTreeMap::new();
    let billing_lefts: BTreeSet<String> = engine
        .left_rows()
        .into_iter()
        .filter(|r| r.spec == "activation_billing")
        .map(|r| r.natural_key)
        .collect();
    universe.insert(FaultKind::SilentMappingFailure, billing_lefts.clone());
    universe.insert(FaultKind::LateArrival, billing_lefts);
    let receipts = replay
        .staged
        .iter()
        .filter(|(_, r)| r.entity_kind == EntityKind::Receiving && r.is_pass())
        .map(|(_, r)| natural_key(r))
        .collect();
    universe.insert(FaultKind::DuplicateFanout, receipts);
    let manifest = RawManifest::load(store)?;
    universe.insert(
        FaultKind::SchemaDrift,
        manifest.batches.iter().map(|b| b.batch_key()).collect(),
    );
    universe.insert(
        FaultKind::QuantityTypo,
        replay.tracker.history().keys().map(series_label).collect(),
    );

    Ok(EngineOutputs {
        as_of: Some(replay.as_of),
        exceptions,
        flagged_series,
        drift_batches,
        universe,
    })
}

pub fn score_store(
    store: &Store,
    cfg: &Config,
    manifest_path: &Path,
    as_of: Date,
) -> Result<ScoreReport> {
    let manifest: GroundTruthManifest = store::read_json(manifest_path).map_err(|e| match e {
        GeraError::Integrity(m) => invalid(m),
        other => other,
    })?;
    let replay = pipeline::replay(store, cfg, as_of)?;
    let outputs = engine_outputs(store, &replay)?;
    score(&manifest, &outputs).map_err(|e| invalid(e.to_string()))
}

pub fn score_text(report: &ScoreReport) -> String {
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut out = format!(
        "score as_of {} (settles_by {})\n",
        report.as_of, report.settles_by
    );
    out.push_str(&format!(
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
        "fault", "expected", "detected", "tp", "recall", "precision"
    ));
    for k in &report.kinds {
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
            k.kind.as_str(),
            k.expected,
            k.detected,
            k.true_positives,
            show(k.recall),
            show(k.precision)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gera_core::date::parse_iso;
    use proptest::prelude::*;

    fn extract(format: ExtractFormat, rows: Vec<Vec<String>>) -> Extract {
        Extract {
            source_id: "billing".into(),
            entity_kind: EntityKind::InvoiceLine,
            as_of: parse_iso("2026-01-02").unwrap(),
            format,
            columns: vec!["invoice_id".into(), "acct".into(), "amount".into()],
            rows,
        }
    }

    fn parsed(e: &Extract) -> Vec<Vec<String>> {
        let rows = match e.format {
            ExtractFormat::Csv => raw::parse_csv(&extract_bytes(e)),
            ExtractFormat::Ndjson => raw::parse_ndjson(&extract_bytes(e)),
        }
        .unwrap();
        rows.into_iter()
            .map(|r| {
                assert_eq!(
                    r.payload.keys().collect::<Vec<_>>(),
                    e.columns.iter().map(String::as_str).collect::<Vec<_>>()
                );
                r.payload.0.into_iter().map(|(_, v)| v).collect()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn written_extracts_parse_back_unchanged(
            rows in prop::collection::vec(prop::collection::vec("[ -~]{0,12}", 3), 0..8),
            ndjson in any::<bool>(),
        ) {
            let format = if ndjson { ExtractFormat::Ndjson } else { ExtractFormat::Csv };
            // A CSV record of one empty field is indistinguishable from a blank line.
            let rows: Vec<Vec<String>> = rows.into_iter().map(|mut r| { r[0].insert(0, 'x'); r }).collect();
            let e = extract(format, rows.clone());
            prop_assert_eq!(parsed(&e), rows);
        }
    }

    #[test]
    fn scenario_files_round_trip_through_the_index() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = gera_core::synth::ScenarioConfig::from_json(
            r#"{"seed":1,"subscribers":20,"start":"2026-01-01","days":3}"#,
        )
        .unwrap();
        let scenario = gera_core::synth::generate(&cfg).unwrap();
        let n = write_scenario(&scenario, dir.path()).unwrap();
        let index: Vec<IndexEntry> = store::read_json(&dir.path().join(INDEX_FILE)).unwrap();
        assert_eq!(n, index.len());
        assert_eq!(n, scenario.extracts.len());
        let manifest: GroundTruthManifest =
            store::read_json(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest, scenario.manifest);
        for (entry, e) in index.iter().zip(&scenario.extracts) {
            assert_eq!(
                store::read_bytes(&dir.path().join(&entry.path)).unwrap(),
                extract_bytes(e)
            );
        }
    }
}
