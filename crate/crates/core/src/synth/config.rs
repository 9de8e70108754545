use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::date::Date;
use crate::entity::EntityKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("{kind}: {requested} faults requested but only {available} candidates exist")]
    Population {
        kind: FaultKind,
        requested: u32,
        available: u32,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceToggles {
    #[serde(default = "yes")]
    pub orders: bool,
    #[serde(default = "yes")]
    pub provisioning: bool,
    #[serde(default = "yes")]
    pub billing: bool,
    #[serde(default = "yes")]
    pub payments: bool,
    #[serde(default = "yes")]
    pub supply_chain: bool,
}

impl Default for SourceToggles {
    fn default() -> Self {
        SourceToggles {
            orders: true,
            provisioning: true,
            billing: true,
            payments: true,
            supply_chain: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyConfig {
    /// Materials per location; every location stocks every material.
    #[serde(default = "default_materials")]
    pub materials: u32,
    /// Days of supply-chain activity; defaults to the order span plus 45.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<u32>,
}

fn default_materials() -> u32 {
    3
}

impl Default for SupplyConfig {
    fn default() -> Self {
        SupplyConfig {
            materials: default_materials(),
            days: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    SilentMappingFailure,
    LateArrival,
    DuplicateFanout,
    SchemaDrift,
    QuantityTypo,
}

impl FaultKind {
    pub const ALL: [FaultKind; 5] = [
        FaultKind::SilentMappingFailure,
        FaultKind::LateArrival,
        FaultKind::DuplicateFanout,
        FaultKind::SchemaDrift,
        FaultKind::QuantityTypo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::SilentMappingFailure => "silent_mapping_failure",
            FaultKind::LateArrival => "late_arrival",
            FaultKind::DuplicateFanout => "duplicate_fanout",
            FaultKind::SchemaDrift => "schema_drift",
            FaultKind::QuantityTypo => "quantity_typo",
        }
    }

    /// The only entity kind each fault is generated against.
    pub fn target(self) -> EntityKind {
        match self {
            FaultKind::SilentMappingFailure | FaultKind::LateArrival => EntityKind::InvoiceLine,
            FaultKind::DuplicateFanout | FaultKind::QuantityTypo => EntityKind::Receiving,
            FaultKind::SchemaDrift => EntityKind::Installation,
        }
    }
}

impl core::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftChange {
    Add,
    Drop,
}

/// One fault family. Exactly one of `count` and `rate` is given; the
/// remaining parameters apply to their own kind only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EntityKind>,
    /// late_arrival: delay of the extract partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<u32>,
    /// duplicate_fanout: extra copies of each chosen row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copies: Option<u32>,
    /// schema_drift: add or drop `field`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<DriftChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// quantity_typo: factor applied to the row quantity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<i64>,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, count: u32) -> FaultSpec {
        FaultSpec {
            kind,
            count: Some(count),
            rate: None,
            target: None,
            days: None,
            copies: None,
            change: None,
            field: None,
            multiplier: None,
        }
    }

    pub fn late_days(&self) -> u32 {
        self.days.unwrap_or(35)
    }

    pub fn copies(&self) -> u32 {
        self.copies.unwrap_or(1)
    }

    pub fn change(&self) -> DriftChange {
        self.change.unwrap_or(DriftChange::Add)
    }

    pub fn drift_field(&self) -> String {
        match (&self.field, self.change()) {
            (Some(f), _) => f.clone(),
            (None, DriftChange::Add) => "crew_notes".to_string(),
            (None, DriftChange::Drop) => "install_id".to_string(),
        }
    }

    pub fn multiplier(&self) -> i64 {
        self.multiplier.unwrap_or(10)
    }

    /// Number of faults to inject among `population` candidates.
    pub fn resolve(&self, population: u32) -> Result<u32, SynthError> {
        let requested = match (self.count, self.rate) {
            (Some(c), None) => c,
            (None, Some(r)) if (0.0..=1.0).contains(&r) => {
                libm::round(r * f64::from(population)) as u32
            }
            (None, Some(r)) => {
                return Err(SynthError::Config(format!(
                    "{}: rate {r} outside [0, 1]",
                    self.kind
                )))
            }
            _ => {
                return Err(SynthError::Config(format!(
                    "{}: give exactly one of count and rate",
                    self.kind
                )))
            }
        };
        if requested > population {
            return Err(SynthError::Population {
                kind: self.kind,
                requested,
                available: population,
            });
        }
        Ok(requested)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(format!("{}: {m}", self.kind)));
        if let Some(t) = self.target {
            if t != self.kind.target() {
                return bad(&format!(
                    "target {t} unsupported; only {}",
                    self.kind.target()
                ));
            }
        }
        let params = [
            (self.days.is_some(), FaultKind::LateArrival, "days"),
            (self.copies.is_some(), FaultKind::DuplicateFanout, "copies"),
            (
                self.change.is_some() || self.field.is_some(),
                FaultKind::SchemaDrift,
                "change/field",
            ),
            (
                self.multiplier.is_some(),
                FaultKind::QuantityTypo,
                "multiplier",
            ),
        ];
        for (given, kind, name) in params {
            if given && kind != self.kind {
                return bad(&format!("parameter `{name}` belongs to {kind}"));
            }
        }
        self.resolve(u32::MAX)?;
        if self.copies == Some(0) {
            return bad("copies must be at least 1");
        }
        if self.days == Some(0) {
            return bad("days must be at least 1");
        }
        if matches!(self.multiplier, Some(m) if m <= 1) {
            return bad("multiplier must exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub subscribers: u32,
    pub start: Date,
    /// Span of order dates.
    pub days: u32,
    #[serde(default = "default_cycle")]
    pub billing_cycle_days: u32,
    #[serde(default)]
    pub sources: SourceToggles,
    #[serde(default)]
    pub supply: SupplyConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

fn default_cycle() -> u32 {
    20
}

/// Detector baseline needed before a typo can be told apart.
pub(crate) const TYPO_EARLIEST_DAY: u32 = 15;

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig, SynthError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn supply_days(&self) -> u32 {
        self.supply.days.unwrap_or(self.days + 45)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.days == 0 || self.days > 3650 {
            return bad("days must be in 1..=3650");
        }
        if self.subscribers > 1_000_000 {
            return bad("at most 1000000 subscribers");
        }
        if !(1..=28).contains(&self.billing_cycle_days) {
            return bad("billing_cycle_days must be in 1..=28");
        }
        let s = self.sources;
        if (s.billing && !s.provisioning) || (s.payments && !s.billing) {
            return bad("billing needs provisioning and payments need billing");
        }
        if s.supply_chain
            && (self.supply.materials == 0
                || self.supply.materials > 99
                || self.supply_days() > 3650)
        {
            return bad("supply needs 1..=99 materials and at most 3650 days");
        }
        let mut seen = Vec::new();
        for f in &self.faults {
            f.validate()?;
            if seen.contains(&f.kind) {
                return Err(SynthError::Config(format!("{}: listed twice", f.kind)));
            }
            seen.push(f.kind);
            let needs_supply = matches!(
                f.kind,
                FaultKind::DuplicateFanout | FaultKind::SchemaDrift | FaultKind::QuantityTypo
            );
            if needs_supply && !s.supply_chain {
                return Err(SynthError::Config(format!(
                    "{} needs the supply chain",
                    f.kind
                )));
            }
            if !needs_supply && !s.billing {
                return Err(SynthError::Config(format!("{} needs billing", f.kind)));
            }
            if f.kind == FaultKind::QuantityTypo && self.supply_days() <= TYPO_EARLIEST_DAY {
                return Err(SynthError::Config(format!(
                    "quantity_typo needs more than {TYPO_EARLIEST_DAY} supply days"
                )));
            }
        }
        Ok(())
    }

    pub fn fault(&self, kind: FaultKind) -> Option<&FaultSpec> {
        self.faults.iter().find(|f| f.kind == kind)
    }
}
