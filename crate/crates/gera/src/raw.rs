//! Raw tier: immutable batches under `raw/<source>/<as_of>/` and the
//! append-only batch manifest.

use std::fmt;
use std::path::Path;

use gera_core::date::Date;
use gera_core::digest::sha256_hex;
use gera_core::ingest::{
    batch_hash, build_records, BatchMeta, IngestReceipt, PartitionKey, Payload, RawRecord,
    RowDiagnostic, SourceRow,
};
use gera_core::staging::NormalizationRuleSet;
use gera_core::EntityKind;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{integrity, invalid, Result};
use crate::store::{self, Store};

/// One ingested batch, in ingestion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub seq: u64,
    pub source_id: String,
    pub entity_kind: EntityKind,
    pub as_of: Date,
    pub batch_hash: String,
    pub records: usize,
    /// Path relative to the store root.
    pub file: String,
    /// SHA-256 of the stored NDJSON file.
    pub file_digest: String,
}

impl BatchEntry {
    pub fn partition(&self) -> PartitionKey {
        PartitionKey {
            source_id: self.source_id.clone(),
            as_of: self.as_of,
        }
    }

    pub fn batch_key(&self) -> String {
        gera_core::synth::batch_key(&self.source_id, self.entity_kind, self.as_of)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawManifest {
    pub batches: Vec<BatchEntry>,
}

impl RawManifest {
    pub fn load(store: &Store) -> Result<RawManifest> {
        store::read_json_or_default(&store.raw_manifest())
    }

    pub fn find(&self, hash: &str) -> Option<&BatchEntry> {
        self.batches.iter().find(|b| b.batch_hash == hash)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Ndjson,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Result<SourceFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(SourceFormat::Csv),
            Some("ndjson" | "jsonl") => Ok(SourceFormat::Ndjson),
            _ => Err(invalid(format!(
                "{}: expected a .csv or .ndjson file",
                path.display()
            ))),
        }
    }
}

/// Rejected batch: every offending row, nothing written.
#[derive(Debug)]
pub struct Rejected(pub Vec<RowDiagnostic>);

impl fmt::Display for Rejected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "batch rejected:\n{}", lines.join("\n"))
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<SourceRow>, Vec<RowDiagnostic>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = match reader.headers() {
        Ok(h) => h
            .iter()
            .map(|s| s.trim_start_matches('\u{feff}').to_string())
            .collect::<Vec<_>>(),
        Err(e) => {
            return Err(vec![RowDiagnostic {
                line: 1,
                message: e.to_string(),
            }])
        }
    };
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for result in reader.records() {
        match result {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line() as usize);
                let payload = headers
                    .iter()
                    .cloned()
                    .zip(record.iter().map(str::to_string))
                    .collect();
                rows.push(SourceRow {
                    line,
                    payload: Payload(payload),
                });
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                diagnostics.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    if diagnostics.is_empty() {
        Ok(rows)
    } else {
        Err(diagnostics)
    }
}

/// Object with scalar values, kept in source order.
struct FlatObject(Vec<(String, String)>);

impl<'de> Deserialize<'de> for FlatObject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FlatVisitor;

        impl<'de> Visitor<'de> for FlatVisitor {
            type Value = FlatObject;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object with scalar values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<FlatObject, A::Error> {
                let mut entries = Vec::new();
                while let Some((key, value)) = access.next_entry::<String, Value>()? {
                    let text = match value {
                        Value::Null => String::new(),
                        Value::String(s) => s,
                        Value::Bool(b) => b.to_string(),
                        Value::Number(n) => n.to_string(),
                        Value::Array(_) | Value::Object(_) => {
                            return Err(de::Error::custom(format!(
                                "field `{key}` is nested; only scalar values are accepted"
                            )))
                        }
                    };
                    entries.push((key, text));
                }
                Ok(FlatObject(entries))
            }
        }

        deserializer.deserialize_map(FlatVisitor)
    }
}

pub fn parse_ndjson(bytes: &[u8]) -> Result<Vec<SourceRow>, Vec<RowDiagnostic>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        vec![RowDiagnostic {
            line: 1,
            message: format!("not UTF-8: {e}"),
        }]
    })?;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FlatObject>(line) {
            Ok(obj) => rows.push(SourceRow {
                line: index + 1,
                payload: Payload(obj.0),
            }),
            Err(e) => diagnostics.push(RowDiagnostic {
                line: index + 1,
                message: e.to_string(),
            }),
        }
    }
    if diagnostics.is_empty() {
        Ok(rows)
    } else {
        Err(diagnostics)
    }
}

pub struct IngestRequest<'a> {
    pub bytes: &'a [u8],
    pub format: SourceFormat,
    pub source_id: &'a str,
    pub entity_kind: EntityKind,
    pub as_of: Date,
}

pub enum IngestOutcome {
    Written(IngestReceipt),
    Rejected(Rejected),
}

/// Ingests one source file. Identical bytes are recognised anywhere in the
/// store and recorded nowhere. The caller holds the store lock.
pub fn ingest(
    store: &Store,
    rules: &NormalizationRuleSet,
    req: &IngestRequest<'_>,
) -> Result<IngestOutcome> {
    if req.source_id.is_empty()
        || req.source_id.contains(['/', '\\'])
        || req.source_id.starts_with('.')
    {
        return Err(invalid(format!("invalid source id `{}`", req.source_id)));
    }
    let check = rules
        .date_check(req.source_id, req.entity_kind)
        .ok_or_else(|| {
            invalid(format!(
                "no event_date rule configured for {}/{}",
                req.source_id, req.entity_kind
            ))
        })?;
    let hash = batch_hash(req.bytes);
    let partition = PartitionKey {
        source_id: req.source_id.to_string(),
        as_of: req.as_of,
    };
    let mut manifest = RawManifest::load(store)?;
    if let Some(existing) = manifest.find(&hash) {
        return Ok(IngestOutcome::Written(IngestReceipt {
            batch_hash: hash,
            records_written: 0,
            partition_key: partition,
            duplicate_of: Some(existing.file.clone()),
        }));
    }
    let rows = match req.format {
        SourceFormat::Csv => parse_csv(req.bytes),
        SourceFormat::Ndjson => parse_ndjson(req.bytes),
    };
    let rows = match rows {
        Ok(rows) => rows,
        Err(diagnostics) => return Ok(IngestOutcome::Rejected(Rejected(diagnostics))),
    };
    let meta = BatchMeta {
        source_id: req.source_id.to_string(),
        entity_kind: req.entity_kind,
        as_of: req.as_of,
        batch_hash: hash.clone(),
    };
    let records = match build_records(&meta, rows, &check) {
        Ok(records) => records,
        Err(diagnostics) => return Ok(IngestOutcome::Rejected(Rejected(diagnostics))),
    };

    let path = store.raw_batch(req.source_id, req.as_of, &hash);
    let bytes = store::ndjson_bytes(&records);
    store::write_atomic(&path, &bytes)?;
    let file = path
        .strip_prefix(store.root())
        .unwrap_or(&path)
        .to_string_lossy()
        .replace('\\', "/");
    let seq = manifest.batches.last().map_or(1, |b| b.seq + 1);
    manifest.batches.push(BatchEntry {
        seq,
        source_id: req.source_id.to_string(),
        entity_kind: req.entity_kind,
        as_of: req.as_of,
        batch_hash: hash.clone(),
        records: records.len(),
        file,
        file_digest: sha256_hex(&bytes),
    });
    store::write_json(&store.raw_manifest(), &manifest)?;
    Ok(IngestOutcome::Written(IngestReceipt {
        batch_hash: hash,
        records_written: records.len(),
        partition_key: partition,
        duplicate_of: None,
    }))
}

/// Reads a stored batch after checking its digest.
pub fn load_batch(store: &Store, entry: &BatchEntry) -> Result<Vec<RawRecord>> {
    let path = store.path(&entry.file);
    let bytes = store::read_optional(&path)?.ok_or_else(|| {
        integrity(format!(
            "partition {}: batch file {} is missing",
            entry.partition(),
            entry.file
        ))
    })?;
    if sha256_hex(&bytes) != entry.file_digest {
        return Err(integrity(format!(
            "partition {}: batch {} does not match its digest",
            entry.partition(),
            entry.file
        )));
    }
    let records: Vec<RawRecord> = store::parse_ndjson(&path, &bytes)?;
    if records.len() != entry.records {
        return Err(integrity(format!(
            "partition {}: batch {} has {} records, manifest says {}",
            entry.partition(),
            entry.file,
            records.len(),
            entry.records
        )));
    }
    Ok(records)
}

/// Records of `source_id` with partitions in `[from, to]`, in ingestion order.
pub fn replay(store: &Store, source_id: &str, from: Date, to: Date) -> Result<Vec<RawRecord>> {
    let manifest = RawManifest::load(store)?;
    let mut out = Vec::new();
    for entry in manifest
        .batches
        .iter()
        .filter(|b| b.source_id == source_id && b.as_of >= from && b.as_of <= to)
    {
        out.extend(load_batch(store, entry)?);
    }
    Ok(out)
}

/// Partitions whose stored files fail their digest or are missing.
pub fn verify(store: &Store) -> Result<Vec<(BatchEntry, String)>> {
    let manifest = RawManifest::load(store)?;
    let mut broken = Vec::new();
    for entry in &manifest.batches {
        if let Err(e) = load_batch(store, entry) {
            broken.push((entry.clone(), e.to_string()));
        }
    }
    Ok(broken)
}
