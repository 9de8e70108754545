//! Seeded scenario generator with fault injection and a ground-truth
//! manifest, plus scoring of engine outputs against that manifest.

mod config;
mod generate;
mod manifest;
mod score;

pub use config::{
    DriftChange, FaultKind, FaultSpec, ScenarioConfig, SourceToggles, SupplyConfig, SynthError,
};
pub use generate::{
    batch_key, generate, material_code, series_key, Extract, ExtractFormat, Scenario, BASE_LEVEL,
    CROSSWALK_NAME, DAILY_RECEIPT, LEVEL_CYCLE, REGIONS, SRC_BILLING, SRC_FIELD, SRC_ORDERS,
    SRC_PAYMENTS, SRC_PROVISIONING, SRC_SUPPLY,
};
pub use manifest::{Expected, ExpectedException, FaultRecord, GroundTruthManifest};
pub use score::{score, EngineOutputs, ExceptionSummary, KindScore, ScoreError, ScoreReport};
