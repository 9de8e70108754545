use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::entity::EntityKind;
use crate::staging::ConfigError;

/// Which outcomes of a spec become exceptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchFlags {
    pub unmatched: bool,
    pub orphaned: bool,
    /// Covers both the duplicate and the inconsistent right-side outcomes.
    pub duplicate: bool,
}

impl Default for MatchFlags {
    fn default() -> Self {
        MatchFlags {
            unmatched: true,
            orphaned: true,
            duplicate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSpec {
    pub name: String,
    pub left: EntityKind,
    pub right: EntityKind,
    pub keys: Vec<String>,
    /// `None` matches on keys alone and never expires a left record.
    pub window_days: Option<u32>,
    #[serde(default)]
    pub flags: MatchFlags,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl MatchSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.starts_with("dedup:") {
            return Err(ConfigError::Invalid(format!(
                "match spec name `{}` is reserved or empty",
                self.name
            )));
        }
        if self.window_days.is_some_and(|w| w > MAX_DAYS) {
            return Err(ConfigError::Invalid(format!(
                "{}: window_days above {MAX_DAYS}",
                self.name
            )));
        }
        if self.keys.is_empty() {
            return Err(ConfigError::Invalid(format!("{}: no join keys", self.name)));
        }
        for key in &self.keys {
            let left = self.left.field_type(key);
            let right = self.right.field_type(key);
            match (left, right) {
                (Some(l), Some(r)) if l.comparable_with(r) => {}
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Invalid(format!(
                        "{}: key `{key}` has incompatible types",
                        self.name
                    )));
                }
                (None, _) => {
                    return Err(ConfigError::Invalid(format!(
                        "{}: unknown field {}.{key}",
                        self.name, self.left
                    )))
                }
                (_, None) => {
                    return Err(ConfigError::Invalid(format!(
                        "{}: unknown field {}.{key}",
                        self.name, self.right
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSpecSet {
    #[serde(default = "default_escalation_days")]
    pub escalation_days: u32,
    pub specs: Vec<MatchSpec>,
}

/// Upper bound for windows and the escalation threshold.
pub const MAX_DAYS: u32 = 36_500;

fn default_escalation_days() -> u32 {
    14
}

impl MatchSpecSet {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let set: MatchSpecSet =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.escalation_days > MAX_DAYS {
            return Err(ConfigError::Invalid(format!(
                "escalation_days above {MAX_DAYS}"
            )));
        }
        let mut names = BTreeSet::new();
        for spec in &self.specs {
            spec.validate()?;
            if !names.insert(spec.name.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate match spec `{}`",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MatchSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// The five shipped entity pairs.
    pub fn builtin() -> Self {
        fn spec(
            name: &str,
            left: EntityKind,
            right: EntityKind,
            keys: &[&str],
            window: Option<u32>,
            flags: MatchFlags,
            description: &str,
        ) -> MatchSpec {
            MatchSpec {
                name: name.into(),
                left,
                right,
                keys: keys.iter().map(|k| k.to_string()).collect(),
                window_days: window,
                flags,
                description: description.into(),
            }
        }
        let only = |unmatched, orphaned| MatchFlags {
            unmatched,
            orphaned,
            duplicate: false,
        };
        MatchSpecSet {
            escalation_days: default_escalation_days(),
            specs: vec![
                spec(
                    "order_provisioning",
                    EntityKind::ServiceOrder,
                    EntityKind::ProvisioningEvent,
                    &["order_id"],
                    Some(30),
                    MatchFlags::default(),
                    "service order without a provisioning event",
                ),
                spec(
                    "invoice_payment",
                    EntityKind::InvoiceLine,
                    EntityKind::PaymentSettlement,
                    &["invoice_id", "subscriber_id"],
                    Some(30),
                    only(true, false),
                    "invoice line not settled within the window",
                ),
                spec(
                    "payment_orphan",
                    EntityKind::InvoiceLine,
                    EntityKind::PaymentSettlement,
                    &["invoice_id"],
                    None,
                    only(false, true),
                    "payment with no source invoice",
                ),
                spec(
                    "issuance_installation",
                    EntityKind::Issuance,
                    EntityKind::Installation,
                    &["po_id", "material_code"],
                    Some(30),
                    MatchFlags::default(),
                    "issued material not installed past the threshold",
                ),
                spec(
                    "activation_billing",
                    EntityKind::ProvisioningEvent,
                    EntityKind::InvoiceLine,
                    &["account_id"],
                    Some(30),
                    MatchFlags::default(),
                    "activation with no invoice within one billing cycle",
                ),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        let set = MatchSpecSet::builtin();
        set.validate().unwrap();
        assert_eq!(set.specs.len(), 5);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(MatchSpecSet::from_json(&json).unwrap(), set);
    }

    #[test]
    fn unknown_key_is_a_configuration_error() {
        let mut set = MatchSpecSet::builtin();
        set.specs[0].keys.push("service_date".into());
        assert!(
            matches!(set.validate(), Err(ConfigError::Invalid(m)) if m.contains("service_date"))
        );
    }

    #[test]
    fn names_are_unique_and_unreserved() {
        let mut set = MatchSpecSet::builtin();
        set.specs[1].name = "order_provisioning".into();
        assert!(set.validate().is_err());
        let mut set = MatchSpecSet::builtin();
        set.specs[1].name = "dedup:receiving".into();
        assert!(set.validate().is_err());
    }
}
