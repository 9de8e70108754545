//! Row-level policies partition rows and deny by default.

use std::collections::BTreeMap;

use gera_core::governance::PolicySet;
use proptest::prelude::*;

const REGIONS: [&str; 4] = ["NE", "NW", "SE", "SW"];

fn policies(split: &[bool; 4]) -> PolicySet {
    let side = |want: bool| -> Vec<&str> {
        REGIONS
            .iter()
            .zip(split)
            .filter(|(_, s)| **s == want)
            .map(|(r, _)| *r)
            .collect()
    };
    let mut list = Vec::new();
    for (role, want) in [("east", true), ("west", false)] {
        let values = side(want);
        if !values.is_empty() {
            list.push(serde_json::json!({"role": role, "object": "*", "territory": {"field": "location_id", "values": values}}));
        }
    }
    list.push(serde_json::json!({"role": "auditor", "object": "*", "territory": "*"}));
    PolicySet::load(
        serde_json::json!({ "policies": list })
            .to_string()
            .as_bytes(),
        &|_| true,
    )
    .unwrap()
}

fn rows(regions: &[usize]) -> Vec<BTreeMap<String, String>> {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            BTreeMap::from([
                ("location_id".to_string(), REGIONS[*r].to_string()),
                ("id".to_string(), i.to_string()),
            ])
        })
        .collect()
}

proptest! {
    #[test]
    fn disjoint_territories_partition_rows(split in any::<[bool; 4]>(), regions in prop::collection::vec(0usize..4, 0..60)) {
        let set = policies(&split);
        let rows = rows(&regions);
        let east = set.filter_rows("east", &["m"], &rows);
        let west = set.filter_rows("west", &["m"], &rows);
        let ids = |v: &[&BTreeMap<String, String>]| v.iter().map(|r| r["id"].clone()).collect::<std::collections::BTreeSet<_>>();
        let (e, w) = (ids(&east), ids(&west));
        prop_assert!(e.is_disjoint(&w));
        prop_assert_eq!(e.len() + w.len(), rows.len());
        prop_assert_eq!(set.filter_rows("auditor", &["m"], &rows).len(), rows.len());
        prop_assert!(set.filter_rows("nobody", &["m"], &rows).is_empty());
    }

    #[test]
    fn adding_a_policy_never_hides_rows(split in any::<[bool; 4]>(), regions in prop::collection::vec(0usize..4, 0..40)) {
        let narrow = policies(&split);
        let mut wide = narrow.clone();
        wide.policies.push(serde_json::from_value(serde_json::json!({"role": "east", "object": "m", "territory": {"field": "location_id", "values": ["NW"]}})).unwrap());
        let rows = rows(&regions);
        prop_assert!(narrow.filter_rows("east", &["m"], &rows).len() <= wide.filter_rows("east", &["m"], &rows).len());
    }
}

#[test]
fn rows_without_the_attribute_are_hidden_from_scoped_roles() {
    let set = policies(&[true, true, false, false]);
    let untagged = vec![BTreeMap::from([("id".to_string(), "1".to_string())])];
    assert!(set.filter_rows("east", &["m"], &untagged).is_empty());
    assert_eq!(set.filter_rows("auditor", &["m"], &untagged).len(), 1);
}
