use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::crosswalk::{CrosswalkSet, Lookup};
use super::{ConfigError, Quality, StagedRecord};
use crate::date::parse_business_date;
use crate::digest::canonical_digest;
use crate::entity::EntityKind;
use crate::ingest::{DateCheck, RawRecord};
use crate::value::FieldType;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    #[default]
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    Trim,
    CaseFold {
        #[serde(default)]
        to: Case,
    },
    StripLeadingZeros,
    DateParse {
        formats: Vec<String>,
    },
    CodeMap {
        map: BTreeMap<String, String>,
    },
    CrosswalkLookup {
        crosswalk: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRule {
    /// Canonical field name.
    pub name: String,
    /// Source column; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default)]
    pub rules: Vec<Rule>,
    /// Type of a field outside the canonical schema.
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub ty: Option<FieldType>,
}

impl FieldRule {
    pub fn source_column(&self) -> &str {
        self.from.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSettings {
    /// Declared offset of the source's business day, minutes east of UTC.
    #[serde(default)]
    pub utc_offset_minutes: i32,
}

/// Field rules per entity kind. Keys are either `entity_kind` or
/// `source_id/entity_kind`; the source-specific entry wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationRuleSet {
    #[serde(default)]
    pub sources: BTreeMap<String, SourceSettings>,
    pub entities: BTreeMap<String, Vec<FieldRule>>,
}

impl NormalizationRuleSet {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let set: NormalizationRuleSet =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, fields) in &self.entities {
            let kind = entity_of_key(key)?;
            let mut seen = Vec::new();
            for field in fields {
                if seen.contains(&&field.name) {
                    return Err(ConfigError::Invalid(format!(
                        "{key}: field `{}` configured twice",
                        field.name
                    )));
                }
                seen.push(&field.name);
                if field.name != "event_date"
                    && kind.field(&field.name).is_none()
                    && field.ty.is_none()
                {
                    return Err(ConfigError::Invalid(format!(
                        "{key}: `{}` is not a canonical {kind} field and declares no type",
                        field.name
                    )));
                }
            }
            if !fields.iter().any(|f| f.name == "event_date") {
                return Err(ConfigError::Invalid(format!("{key}: no event_date rule")));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        canonical_digest(self)
    }

    pub fn fields_for(&self, source_id: &str, kind: EntityKind) -> Option<&[FieldRule]> {
        self.entities
            .get(&format!("{source_id}/{kind}"))
            .or_else(|| self.entities.get(kind.as_str()))
            .map(Vec::as_slice)
    }

    pub fn offset_minutes(&self, source_id: &str) -> i32 {
        self.sources
            .get(source_id)
            .map(|s| s.utc_offset_minutes)
            .unwrap_or(0)
    }

    /// The raw-tier date check implied by the `event_date` rule.
    pub fn date_check(&self, source_id: &str, kind: EntityKind) -> Option<DateCheck> {
        let field = self
            .fields_for(source_id, kind)?
            .iter()
            .find(|f| f.name == "event_date")?;
        let formats = field
            .rules
            .iter()
            .find_map(|r| match r {
                Rule::DateParse { formats } => Some(formats.clone()),
                _ => None,
            })
            .unwrap_or_else(|| alloc::vec!["YYYY-MM-DD".to_string()]);
        Some(DateCheck {
            column: field.source_column().to_string(),
            formats,
        })
    }

    /// Declared non-canonical fields per entity kind, for the metric catalog.
    pub fn extra_fields(&self) -> Vec<(EntityKind, String, FieldType)> {
        let mut out = Vec::new();
        for (key, fields) in &self.entities {
            let Ok(kind) = entity_of_key(key) else {
                continue;
            };
            for field in fields {
                if let (None, Some(ty)) = (kind.field(&field.name), field.ty) {
                    if !out
                        .iter()
                        .any(|(k, n, _): &(EntityKind, String, FieldType)| {
                            *k == kind && *n == field.name
                        })
                    {
                        out.push((kind, field.name.clone(), ty));
                    }
                }
            }
        }
        out
    }

    /// Every crosswalk name referenced by a lookup rule.
    pub fn crosswalk_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .entities
            .values()
            .flatten()
            .flat_map(|f| f.rules.iter())
            .filter_map(|r| match r {
                Rule::CrosswalkLookup { crosswalk } => Some(crosswalk.as_str()),
                _ => None,
            })
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }
}

fn entity_of_key(key: &str) -> Result<EntityKind, ConfigError> {
    let kind = key.rsplit('/').next().unwrap_or(key);
    kind.parse()
        .map_err(|e: crate::entity::UnknownEntityKind| ConfigError::Invalid(e.to_string()))
}

/// A rule set bound to its crosswalks, with the combined version tag
/// computed once.
pub struct Normalizer<'a> {
    rules: &'a NormalizationRuleSet,
    crosswalks: &'a CrosswalkSet,
    version: String,
}

impl<'a> Normalizer<'a> {
    pub fn new(rules: &'a NormalizationRuleSet, crosswalks: &'a CrosswalkSet) -> Self {
        let digest = rules.digest();
        let version = format!("rules@{}{}", &digest[..12], crosswalks.version_tag());
        Normalizer {
            rules,
            crosswalks,
            version,
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn quarantined(&self, raw: &RawRecord, reason: String) -> StagedRecord {
        StagedRecord {
            lineage_id: raw.lineage_id.clone(),
            source_id: raw.source_id.clone(),
            entity_kind: raw.entity_kind,
            event_date: None,
            fields: BTreeMap::new(),
            quality: Quality::Quarantined { reason },
            config_version: self.version.clone(),
        }
    }

    pub fn normalize(&self, raw: &RawRecord) -> StagedRecord {
        let Some(field_rules) = self.rules.fields_for(&raw.source_id, raw.entity_kind) else {
            return self.quarantined(raw, format!("no_rules:{}", raw.entity_kind));
        };
        let offset = self.rules.offset_minutes(&raw.source_id);
        let mut staged = self.quarantined(raw, String::new());
        staged.quality = Quality::Pass;

        for field in field_rules {
            let column = field.source_column();
            let input = raw.payload.get(column).unwrap_or("");
            let value = match apply_rules(input, &field.rules, column, offset, self.crosswalks) {
                Ok(value) => value,
                Err(reason) => {
                    staged.quarantine(reason);
                    return staged;
                }
            };
            let ty = if field.name == "event_date" {
                FieldType::Date
            } else {
                raw.entity_kind
                    .field_type(&field.name)
                    .or(field.ty)
                    .unwrap_or(FieldType::Str)
            };
            if value.trim().is_empty() {
                continue;
            }
            let Some(canonical) = ty.canonicalize(&value) else {
                staged.quarantine(format!("type:{}", field.name));
                return staged;
            };
            if field.name == "event_date" {
                staged.event_date = crate::date::parse_iso(&canonical);
            } else {
                staged.fields.insert(field.name.clone(), canonical);
            }
        }

        if staged.event_date.is_none() {
            staged.quarantine("required:event_date".to_string());
            return staged;
        }
        for def in raw.entity_kind.schema().iter().filter(|f| f.required) {
            if staged.fields.get(def.name).is_none_or(|v| v.is_empty()) {
                staged.quarantine(format!("required:{}", def.name));
                return staged;
            }
        }
        staged
    }
}

/// Runs the rules of one field in order; the first failure stops the chain.
fn apply_rules(
    input: &str,
    rules: &[Rule],
    column: &str,
    offset_minutes: i32,
    crosswalks: &CrosswalkSet,
) -> Result<String, String> {
    let mut value = input.to_string();
    for rule in rules {
        value = match rule {
            Rule::Trim => value.trim().to_string(),
            Rule::CaseFold { to: Case::Lower } => value.to_lowercase(),
            Rule::CaseFold { to: Case::Upper } => value.to_uppercase(),
            Rule::StripLeadingZeros => strip_leading_zeros(&value),
            Rule::DateParse { formats } => {
                if value.trim().is_empty() {
                    value
                } else {
                    parse_business_date(&value, formats, offset_minutes)
                        .map(|d| d.to_string())
                        .ok_or_else(|| format!("date_parse:{column}"))?
                }
            }
            Rule::CodeMap { map } => map.get(&value).cloned().unwrap_or(value),
            Rule::CrosswalkLookup { crosswalk } => match crosswalks.get(crosswalk) {
                None => return Err(format!("crosswalk_missing:{crosswalk}")),
                Some(table) => match table.lookup(&value) {
                    Lookup::Hit(canonical) => canonical.to_string(),
                    Lookup::Miss => return Err(format!("crosswalk_miss:{column}")),
                    Lookup::Shape => return Err(format!("crosswalk_shape:{column}")),
                },
            },
        };
    }
    Ok(value)
}

fn strip_leading_zeros(value: &str) -> String {
    let stripped = value.trim_start_matches('0');
    if stripped.is_empty() && !value.is_empty() {
        "0".to_string()
    } else {
        stripped.to_string()
    }
}

/// Normalizes one record; see [`Normalizer`] for repeated use.
pub fn normalize(
    raw: &RawRecord,
    rules: &NormalizationRuleSet,
    crosswalks: &CrosswalkSet,
) -> StagedRecord {
    Normalizer::new(rules, crosswalks).normalize(raw)
}
