use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::semantic::Row;

/// Object name that matches every entity, model and metric.
pub const ANY: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopedTerritory {
    pub field: String,
    pub values: BTreeSet<String>,
}

/// `"*"` or a field with its allowed values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Territory {
    Scoped(ScopedTerritory),
    Any(String),
}

impl Territory {
    fn admits(&self, row: &dyn Territorial) -> bool {
        match self {
            Territory::Any(_) => true,
            Territory::Scoped(s) => row
                .attribute(&s.field)
                .is_some_and(|v| s.values.contains(v)),
        }
    }
}

/// Allow rule: `role` may see rows of `object` inside `territory`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub role: String,
    pub object: String,
    pub territory: Territory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    policies: Vec<Policy>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("malformed policy file: {0}")]
    Malformed(String),
    #[error("policy {index}: unknown object `{object}`")]
    UnknownObject { index: usize, object: String },
    #[error("policy {index}: {message}")]
    Invalid { index: usize, message: String },
}

/// Policies in effect; `version` is the SHA-256 of the file bytes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicySet {
    pub policies: Vec<Policy>,
    pub version: String,
}

/// Row access for territory predicates.
pub trait Territorial {
    fn attribute(&self, field: &str) -> Option<&str>;
}

impl Territorial for BTreeMap<String, String> {
    fn attribute(&self, field: &str) -> Option<&str> {
        self.get(field).map(String::as_str)
    }
}

impl Territorial for Row {
    fn attribute(&self, field: &str) -> Option<&str> {
        self.fields.attribute(field)
    }
}

/// Role plus the territory attributes its policies grant, as `field=value`
/// or `*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Principal {
    pub role: String,
    pub territory: BTreeSet<String>,
}

impl PolicySet {
    /// Parses and validates; `known` decides which object names exist.
    pub fn load(bytes: &[u8], known: &dyn Fn(&str) -> bool) -> Result<PolicySet, PolicyError> {
        let file: PolicyFile =
            serde_json::from_slice(bytes).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        for (index, p) in file.policies.iter().enumerate() {
            let invalid = |message: String| PolicyError::Invalid { index, message };
            if p.role.trim().is_empty() {
                return Err(invalid("empty role".into()));
            }
            if p.object != ANY && !known(&p.object) {
                return Err(PolicyError::UnknownObject {
                    index,
                    object: p.object.clone(),
                });
            }
            match &p.territory {
                Territory::Any(s) if s != ANY => {
                    return Err(invalid(format!(
                        "territory must be \"*\" or an object, got `{s}`"
                    )))
                }
                Territory::Scoped(s) if s.field.trim().is_empty() => {
                    return Err(invalid("empty territory field".into()))
                }
                Territory::Scoped(s) if s.values.is_empty() => {
                    return Err(invalid(format!(
                        "empty allowed-value set for `{}`",
                        s.field
                    )))
                }
                _ => {}
            }
        }
        Ok(PolicySet {
            policies: file.policies,
            version: sha256_hex(bytes),
        })
    }

    pub fn roles(&self) -> BTreeSet<&str> {
        self.policies.iter().map(|p| p.role.as_str()).collect()
    }

    /// True when some policy of `role` covers one of `objects` and admits the row.
    pub fn allows(&self, role: &str, objects: &[&str], row: &dyn Territorial) -> bool {
        self.policies.iter().any(|p| {
            p.role == role
                && (p.object == ANY || objects.contains(&p.object.as_str()))
                && p.territory.admits(row)
        })
    }

    pub fn filter_rows<'a, T: Territorial>(
        &self,
        role: &str,
        objects: &[&str],
        rows: &'a [T],
    ) -> Vec<&'a T> {
        rows.iter()
            .filter(|r| self.allows(role, objects, *r))
            .collect()
    }

    pub fn principal(&self, role: &str) -> Principal {
        let mut territory = BTreeSet::new();
        for p in self.policies.iter().filter(|p| p.role == role) {
            match &p.territory {
                Territory::Any(_) => {
                    territory.insert(ANY.to_string());
                }
                Territory::Scoped(s) => {
                    territory.extend(s.values.iter().map(|v| format!("{}={v}", s.field)))
                }
            }
        }
        Principal {
            role: role.to_string(),
            territory,
        }
    }
}
