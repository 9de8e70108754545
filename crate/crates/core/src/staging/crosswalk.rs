use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::digest::canonical_digest;

/// Versioned source-id to canonical-id table.
///
/// Patterns are shape constraints of equal length: `#` is an ASCII digit,
/// `@` an ASCII letter, `*` either; every other character is literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crosswalk {
    pub name: String,
    pub source_pattern: String,
    pub target_pattern: String,
    pub entries: BTreeMap<String, String>,
    /// Canonical ids that several source ids may legitimately share.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub merged: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup<'a> {
    Hit(&'a str),
    Miss,
    /// The key does not have the source shape, so it cannot be in the table.
    Shape,
}

pub fn shape_matches(pattern: &str, value: &str) -> bool {
    pattern.chars().count() == value.chars().count()
        && pattern.chars().zip(value.chars()).all(|(p, c)| match p {
            '#' => c.is_ascii_digit(),
            '@' => c.is_ascii_alphabetic(),
            '*' => c.is_ascii_alphanumeric(),
            literal => literal == c,
        })
}

impl Crosswalk {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let table: Crosswalk =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut targets: BTreeMap<&str, &str> = BTreeMap::new();
        for (source, target) in &self.entries {
            if !shape_matches(&self.source_pattern, source) {
                return Err(ConfigError::Invalid(format!(
                    "{}: key `{source}` does not match `{}`",
                    self.name, self.source_pattern
                )));
            }
            if !shape_matches(&self.target_pattern, target) {
                return Err(ConfigError::Invalid(format!(
                    "{}: value `{target}` does not match `{}`",
                    self.name, self.target_pattern
                )));
            }
            if let Some(previous) = targets.insert(target, source) {
                if !self.merged.contains(target) {
                    return Err(ConfigError::Invalid(format!(
                        "{}: `{previous}` and `{source}` both map to `{target}`",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn version(&self) -> String {
        canonical_digest(self)
    }

    pub fn lookup(&self, key: &str) -> Lookup<'_> {
        if !shape_matches(&self.source_pattern, key) {
            return Lookup::Shape;
        }
        match self.entries.get(key) {
            Some(target) => Lookup::Hit(target),
            None => Lookup::Miss,
        }
    }
}

/// All crosswalks in effect for a run, by name.
#[derive(Debug, Clone, Default)]
pub struct CrosswalkSet {
    tables: BTreeMap<String, (Crosswalk, String)>,
}

impl CrosswalkSet {
    pub fn insert(&mut self, table: Crosswalk) {
        let version = table.version();
        self.tables.insert(table.name.clone(), (table, version));
    }

    pub fn get(&self, name: &str) -> Option<&Crosswalk> {
        self.tables.get(name).map(|(t, _)| t)
    }

    pub fn versions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tables
            .iter()
            .map(|(n, (_, v))| (n.as_str(), v.as_str()))
    }

    /// `+name@digest12` for every table, in name order.
    pub fn version_tag(&self) -> String {
        let mut tag = String::new();
        for (name, version) in self.versions() {
            tag.push_str(&format!("+{name}@{}", &version[..12]));
        }
        tag
    }
}
