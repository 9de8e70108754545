//! SHA-256 digests over bytes and over canonical JSON.
//!
//! Canonical JSON is compact UTF-8 with object keys sorted; `serde_json`
//! without `preserve_order` stores maps in a `BTreeMap`, so routing through
//! [`serde_json::Value`] yields the sorted form.

use alloc::string::String;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&value).expect("json value serializes")
}

pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

/// Short stable identifier: `prefix` followed by 12 hex digits of the digest
/// of `parts` joined by an ASCII unit separator.
pub fn short_id(prefix: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    let hex = hex::encode(hasher.finalize());
    let mut id = String::from(prefix);
    id.push_str(&hex[..12]);
    id
}
