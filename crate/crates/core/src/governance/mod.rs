//! Row-level security and the hash-chained audit log.

mod audit;
mod policy;

pub use audit::{
    parse_log, verify, verify_chain, Action, AuditEntry, AuditEvent, AuditLog, BrokenLink,
    CompactError, Manifest, Tombstone, VerifyReport, DEFAULT_RETENTION_DAYS, GENESIS_HASH,
};
pub use policy::{
    Policy, PolicyError, PolicySet, Principal, ScopedTerritory, Territorial, Territory, ANY,
};
