//! Outputs depend on what was ingested, not the order it arrived in.

use std::path::Path;

use gera::config::{self, Config};
use gera::pipeline::{self, DEFAULT_LOOKBACK_DAYS};
use gera::raw::{self, IngestOutcome, IngestRequest, SourceFormat};
use gera::store::{self, Store};
use gera::synth_io::extract_bytes;
use gera_core::synth::{
    generate, Extract, ExtractFormat, Scenario, ScenarioConfig, CROSSWALK_NAME,
};
use proptest::prelude::*;

fn scenario() -> Scenario {
    let cfg = ScenarioConfig::from_json(
        r#"{"seed":4,"subscribers":40,"start":"2026-01-01","days":6,"supply":{"days":8},
            "faults":[{"kind":"silent_mapping_failure","count":2},{"kind":"duplicate_fanout","count":2}]}"#,
    )
    .unwrap();
    generate(&cfg).unwrap()
}

fn outputs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for rel in ["recon", "inventory", "staged", "quarantine"] {
        let mut stack = vec![root.join(rel)];
        while let Some(dir) = stack.pop() {
            let Ok(entries) = std::fs::read_dir(&dir) else {
                continue;
            };
            for entry in entries {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.push((
                        path.strip_prefix(root).unwrap().display().to_string(),
                        std::fs::read(&path).unwrap(),
                    ));
                }
            }
        }
    }
    out.sort();
    out
}

fn ingest_all(scenario: &Scenario, order: &[usize]) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path());
    config::init(&store).unwrap();
    store::write_json(
        &store
            .config("crosswalks")
            .join(format!("{CROSSWALK_NAME}.json")),
        &scenario.crosswalk,
    )
    .unwrap();
    let cfg = Config::load(&store).unwrap();
    for &i in order {
        let e: &Extract = &scenario.extracts[i];
        let bytes = extract_bytes(e);
        let format = match e.format {
            ExtractFormat::Csv => SourceFormat::Csv,
            ExtractFormat::Ndjson => SourceFormat::Ndjson,
        };
        let req = IngestRequest {
            bytes: &bytes,
            format,
            source_id: &e.source_id,
            entity_kind: e.entity_kind,
            as_of: e.as_of,
        };
        assert!(matches!(
            raw::ingest(&store, &cfg.rules, &req).unwrap(),
            IngestOutcome::Written(_)
        ));
    }
    pipeline::run(
        &store,
        &cfg,
        scenario.manifest.settles_by,
        DEFAULT_LOOKBACK_DAYS,
    )
    .unwrap();
    outputs(dir.path())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ingestion_order_is_irrelevant(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let scenario = scenario();
        let natural: Vec<usize> = (0..scenario.extracts.len()).collect();
        let mut shuffled = natural.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = ingest_all(&scenario, &natural);
        let b = ingest_all(&scenario, &shuffled);
        prop_assert!(!a.is_empty());
        prop_assert_eq!(a, b);
    }
}
