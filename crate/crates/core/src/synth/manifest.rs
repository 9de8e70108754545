use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::FaultKind;
use crate::date::Date;
use crate::entity::EntityKind;
use crate::reconcile::{Category, Status};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedException {
    pub spec: String,
    pub category: Category,
    pub status: Status,
    pub natural_key: String,
}

/// What the engine must report for one injected fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expected {
    Exception(ExpectedException),
    /// The fault is absorbed (e.g. a delay shorter than the window).
    Matched {
        spec: String,
        natural_key: String,
    },
    Drift {
        batch: String,
        blocking: bool,
        /// Exceptions that follow from the blocked batch.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        collateral: Vec<ExpectedException>,
    },
    Flag {
        series: String,
        snapshot_date: Date,
    },
}

impl Expected {
    /// Key in the detection space of the fault's kind; `None` when nothing
    /// should be detected.
    pub fn score_key(&self) -> Option<&str> {
        match self {
            Expected::Exception(e) => Some(&e.natural_key),
            Expected::Matched { .. } => None,
            Expected::Drift { batch, .. } => Some(batch),
            Expected::Flag { series, .. } => Some(series),
        }
    }
}

/// One injected fault instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultRecord {
    pub kind: FaultKind,
    pub target: EntityKind,
    pub source_id: String,
    /// Partition the affected extract was (or would have been) emitted in.
    pub partition: Date,
    /// Natural keys of the affected records.
    pub affected: Vec<String>,
    pub expected: Expected,
}

/// Ground truth written beside the extracts, independent of any engine run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthManifest {
    pub seed: u64,
    pub config_digest: String,
    pub first_partition: Date,
    pub last_partition: Date,
    /// Earliest as_of at which every expected outcome is observable.
    pub settles_by: Date,
    pub rows: BTreeMap<EntityKind, u64>,
    pub faults: Vec<FaultRecord>,
}

impl GroundTruthManifest {
    pub fn records(&self, kind: FaultKind) -> impl Iterator<Item = &FaultRecord> {
        self.faults.iter().filter(move |f| f.kind == kind)
    }
}
