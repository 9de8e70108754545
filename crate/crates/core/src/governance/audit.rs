use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::policy::Principal;
use crate::date::{add_days, Date};
use crate::digest::{canonical_json, sha256_hex};

/// `prev_hash` of the first event of a log.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub const DEFAULT_RETENTION_DAYS: u32 = 365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    EvaluateMetric,
    ReadReport,
    ReadExceptions,
    AdminPolicyChange,
    /// Stands in for a compacted prefix of the log.
    RetentionTombstone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tombstone {
    pub count: u64,
    pub first_seq: u64,
    pub last_seq: u64,
    pub first_as_of: Date,
    pub last_as_of: Date,
    /// Chain hash of the last removed event; the successor links to it.
    pub segment_tail_hash: String,
}

/// Fields supplied by the caller; sequence and hashes are assigned on append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub as_of: Date,
    pub principal: Principal,
    pub action: Action,
    pub object: String,
    pub row_count: u64,
    pub policy_version: String,
    pub detail: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub as_of: Date,
    pub principal: Principal,
    pub action: Action,
    pub object: String,
    pub row_count: u64,
    pub policy_version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tombstone: Option<Tombstone>,
    pub prev_hash: String,
    pub event_hash: String,
}

#[derive(Serialize)]
struct Body<'a> {
    seq: u64,
    as_of: Date,
    principal: &'a Principal,
    action: Action,
    object: &'a str,
    row_count: u64,
    policy_version: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    detail: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tombstone: &'a Option<Tombstone>,
}

impl AuditEvent {
    /// `sha256(prev_hash ‖ canonical JSON of every field but the two hashes)`.
    pub fn compute_hash(&self) -> String {
        let body = Body {
            seq: self.seq,
            as_of: self.as_of,
            principal: &self.principal,
            action: self.action,
            object: &self.object,
            row_count: self.row_count,
            policy_version: &self.policy_version,
            detail: &self.detail,
            tombstone: &self.tombstone,
        };
        let mut bytes = self.prev_hash.clone().into_bytes();
        bytes.extend_from_slice(canonical_json(&body).as_bytes());
        sha256_hex(&bytes)
    }

    /// Hash the successor must carry as `prev_hash`.
    pub fn link_hash(&self) -> &str {
        match &self.tombstone {
            Some(t) => &t.segment_tail_hash,
            None => &self.event_hash,
        }
    }

    pub fn to_line(&self) -> String {
        canonical_json(self)
    }

    fn sealed(
        entry: AuditEntry,
        seq: u64,
        prev_hash: String,
        tombstone: Option<Tombstone>,
    ) -> AuditEvent {
        let mut event = AuditEvent {
            seq,
            as_of: entry.as_of,
            principal: entry.principal,
            action: entry.action,
            object: entry.object,
            row_count: entry.row_count,
            policy_version: entry.policy_version,
            detail: entry.detail,
            tombstone,
            prev_hash,
            event_hash: String::new(),
        };
        event.event_hash = event.compute_hash();
        event
    }
}

/// Tail record kept beside the log to detect truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub head_seq: u64,
    pub tail_seq: u64,
    pub tail_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokenLink {
    pub seq: u64,
    pub reason: String,
}

impl fmt::Display for BrokenLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "broken at sequence {}: {}", self.seq, self.reason)
    }
}

/// Walks the chain. Index `i` must carry sequence `head_seq + i`.
pub fn verify_chain(events: &[AuditEvent], head_seq: u64) -> Result<(), BrokenLink> {
    let mut prev = GENESIS_HASH;
    for (i, e) in events.iter().enumerate() {
        let seq = head_seq + i as u64;
        let broken = |reason: &str| {
            Err(BrokenLink {
                seq,
                reason: reason.to_string(),
            })
        };
        if e.seq != seq {
            return broken("sequence out of order");
        }
        match &e.tombstone {
            Some(t) => {
                if i != 0 || e.action != Action::RetentionTombstone {
                    return broken("tombstone away from the log head");
                }
                if t.first_seq != 1
                    || t.last_seq != e.seq
                    || t.count != t.last_seq
                    || t.first_as_of > t.last_as_of
                {
                    return broken("inconsistent tombstone summary");
                }
            }
            None if e.action == Action::RetentionTombstone => {
                return broken("tombstone without summary")
            }
            None if i == 0 && seq != 1 => return broken("log does not start at sequence 1"),
            None => {}
        }
        if e.prev_hash != prev {
            return broken("prev_hash does not match predecessor");
        }
        if e.compute_hash() != e.event_hash {
            return broken("event_hash does not match content");
        }
        prev = e.link_hash();
    }
    Ok(())
}

/// Parses an NDJSON log. Line `i` must hold sequence `head_seq + i` in
/// canonical form; anything else is a break at that sequence.
pub fn parse_log(bytes: &[u8], head_seq: u64) -> Result<Vec<AuditEvent>, BrokenLink> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut events = Vec::new();
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        let seq = head_seq + i as u64;
        let broken = |reason: &str| BrokenLink {
            seq,
            reason: reason.to_string(),
        };
        let text = core::str::from_utf8(line).map_err(|_| broken("line is not UTF-8"))?;
        let event: AuditEvent =
            serde_json::from_str(text).map_err(|_| broken("line does not parse as an event"))?;
        if event.to_line() != text {
            return Err(broken("line is not in canonical form"));
        }
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub events: usize,
    pub head_seq: u64,
    pub tail_seq: Option<u64>,
    pub broken: Option<BrokenLink>,
    /// Set when the chain is sound but its tail disagrees with the manifest.
    pub manifest_mismatch: Option<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.broken.is_none() && self.manifest_mismatch.is_none()
    }
}

pub fn verify(events: &[AuditEvent], manifest: &Manifest) -> VerifyReport {
    let broken = verify_chain(events, manifest.head_seq).err();
    let tail = events.last();
    let manifest_mismatch = match (&broken, tail) {
        (Some(_), _) => None,
        (None, None) if manifest.tail_seq == 0 => None,
        (None, None) => Some(alloc::format!(
            "log is empty but manifest expects tail {}",
            manifest.tail_seq
        )),
        (None, Some(t)) if t.seq != manifest.tail_seq => Some(alloc::format!(
            "tail sequence {} but manifest expects {}",
            t.seq,
            manifest.tail_seq
        )),
        (None, Some(t)) if t.link_hash() != manifest.tail_hash => Some(alloc::format!(
            "tail hash differs from manifest at sequence {}",
            t.seq
        )),
        _ => None,
    };
    VerifyReport {
        events: events.len(),
        head_seq: manifest.head_seq,
        tail_seq: tail.map(|t| t.seq),
        broken,
        manifest_mismatch,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompactError {
    #[error("retention must be at least one day")]
    Retention,
    #[error("refusing to compact an unverified log: {0}")]
    Unverified(BrokenLink),
}

/// In-memory log with a single writer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditLog {
    events: Vec<AuditEvent>,
    head_seq: u64,
}

impl Default for AuditLog {
    fn default() -> Self {
        AuditLog {
            events: Vec::new(),
            head_seq: 1,
        }
    }
}

impl AuditLog {
    pub fn from_parts(events: Vec<AuditEvent>, head_seq: u64) -> AuditLog {
        AuditLog { events, head_seq }
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn manifest(&self) -> Manifest {
        match self.events.last() {
            Some(t) => Manifest {
                head_seq: self.head_seq,
                tail_seq: t.seq,
                tail_hash: t.link_hash().to_string(),
            },
            None => Manifest {
                head_seq: self.head_seq,
                tail_seq: 0,
                tail_hash: GENESIS_HASH.to_string(),
            },
        }
    }

    pub fn append(&mut self, entry: AuditEntry) -> &AuditEvent {
        let (seq, prev) = match self.events.last() {
            Some(t) => (t.seq + 1, t.link_hash().to_string()),
            None => (1, GENESIS_HASH.to_string()),
        };
        self.events.push(AuditEvent::sealed(entry, seq, prev, None));
        self.events.last().expect("just pushed")
    }

    pub fn verify(&self) -> VerifyReport {
        verify(&self.events, &self.manifest())
    }

    /// Replaces the longest prefix of events dated before
    /// `as_of - retention_days` by one tombstone. Returns whether anything
    /// changed.
    pub fn compact(&mut self, retention_days: u32, as_of: Date) -> Result<bool, CompactError> {
        if retention_days == 0 {
            return Err(CompactError::Retention);
        }
        verify_chain(&self.events, self.head_seq).map_err(CompactError::Unverified)?;
        let cutoff = add_days(as_of, -i64::from(retention_days));
        let removable = self.events.iter().take_while(|e| e.as_of < cutoff).count();
        let only_old_tombstone = removable == 1 && self.events[0].tombstone.is_some();
        if removable == 0 || only_old_tombstone {
            return Ok(false);
        }
        let removed = &self.events[..removable];
        let last = &removed[removable - 1];
        let first_as_of = removed
            .iter()
            .map(|e| e.tombstone.as_ref().map_or(e.as_of, |t| t.first_as_of))
            .min()
            .expect("non-empty");
        let last_as_of = removed.iter().map(|e| e.as_of).max().expect("non-empty");
        let tombstone = Tombstone {
            count: last.seq,
            first_seq: 1,
            last_seq: last.seq,
            first_as_of,
            last_as_of,
            segment_tail_hash: last.link_hash().to_string(),
        };
        let mut detail = BTreeMap::new();
        detail.insert("retention_days".to_string(), retention_days.to_string());
        detail.insert("cutoff".to_string(), cutoff.to_string());
        let entry = AuditEntry {
            as_of: last_as_of,
            principal: Principal {
                role: "gera".to_string(),
                territory: BTreeSet::new(),
            },
            action: Action::RetentionTombstone,
            object: "audit_log".to_string(),
            row_count: last.seq,
            policy_version: last.policy_version.clone(),
            detail,
        };
        let stone = AuditEvent::sealed(entry, last.seq, GENESIS_HASH.to_string(), Some(tombstone));
        let mut events = Vec::with_capacity(self.events.len() - removable + 1);
        events.push(stone);
        events.extend_from_slice(&self.events[removable..]);
        self.head_seq = last.seq;
        self.events = events;
        Ok(true)
    }
}
