use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::FaultKind;
use super::manifest::GroundTruthManifest;
use crate::date::Date;
use crate::reconcile::{Category, Status};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExceptionSummary {
    pub spec: String,
    pub category: Category,
    pub status: Status,
    pub natural_key: String,
}

/// What an engine run reported, reduced to the fields scoring needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineOutputs {
    pub as_of: Option<Date>,
    pub exceptions: Vec<ExceptionSummary>,
    pub flagged_series: BTreeSet<String>,
    pub drift_batches: BTreeSet<String>,
    /// Every key the engine could have reported, per fault kind.
    pub universe: BTreeMap<FaultKind, BTreeSet<String>>,
}

impl EngineOutputs {
    /// Keys the engine reports for the detector of `kind`.
    pub fn detected(&self, kind: FaultKind) -> BTreeSet<String> {
        let exceptions = |spec: &str,
                          category: Category,
                          status: Option<Status>|
         -> BTreeSet<String> {
            self.exceptions
                .iter()
                .filter(|e| {
                    e.spec == spec && e.category == category && status.is_none_or(|s| e.status == s)
                })
                .map(|e| e.natural_key.clone())
                .collect()
        };
        match kind {
            FaultKind::SilentMappingFailure => exceptions(
                "activation_billing",
                Category::Unmatched,
                Some(Status::Open),
            ),
            FaultKind::LateArrival => exceptions(
                "activation_billing",
                Category::Unmatched,
                Some(Status::MatchedLate),
            ),
            FaultKind::DuplicateFanout => exceptions("dedup:receiving", Category::Duplicate, None),
            FaultKind::SchemaDrift => self.drift_batches.clone(),
            FaultKind::QuantityTypo => self.flagged_series.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindScore {
    pub kind: FaultKind,
    pub expected: usize,
    pub detected: usize,
    pub true_positives: usize,
    /// `None` when nothing was expected.
    pub recall: Option<f64>,
    /// `None` when nothing was detected.
    pub precision: Option<f64>,
    pub missed: Vec<String>,
    pub spurious: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub as_of: Date,
    pub settles_by: Date,
    pub kinds: Vec<KindScore>,
}

impl ScoreReport {
    pub fn kind(&self, kind: FaultKind) -> &KindScore {
        self.kinds
            .iter()
            .find(|k| k.kind == kind)
            .expect("every kind is scored")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("engine outputs carry no as_of")]
    NoAsOf,
    #[error("outputs as of {as_of} predate settlement on {settles_by}")]
    Unsettled { as_of: Date, settles_by: Date },
    #[error("{kind}: expected keys outside the engine's key space: {keys:?}")]
    KeySpace { kind: FaultKind, keys: Vec<String> },
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores detections against ground truth, per fault kind.
pub fn score(
    manifest: &GroundTruthManifest,
    outputs: &EngineOutputs,
) -> Result<ScoreReport, ScoreError> {
    let as_of = outputs.as_of.ok_or(ScoreError::NoAsOf)?;
    if as_of < manifest.settles_by {
        return Err(ScoreError::Unsettled {
            as_of,
            settles_by: manifest.settles_by,
        });
    }
    let mut kinds = Vec::new();
    for kind in FaultKind::ALL {
        let expected: BTreeSet<String> = manifest
            .records(kind)
            .filter_map(|r| r.expected.score_key())
            .map(String::from)
            .collect();
        if let Some(universe) = outputs.universe.get(&kind) {
            let outside: Vec<String> = expected.difference(universe).cloned().collect();
            if !outside.is_empty() {
                return Err(ScoreError::KeySpace {
                    kind,
                    keys: outside,
                });
            }
        }
        let detected = outputs.detected(kind);
        let true_positives = expected.intersection(&detected).count();
        kinds.push(KindScore {
            kind,
            expected: expected.len(),
            detected: detected.len(),
            true_positives,
            recall: ratio(true_positives, expected.len()),
            precision: ratio(true_positives, detected.len()),
            missed: expected.difference(&detected).cloned().collect(),
            spurious: detected.difference(&expected).cloned().collect(),
        });
    }
    Ok(ScoreReport {
        as_of,
        settles_by: manifest.settles_by,
        kinds,
    })
}
