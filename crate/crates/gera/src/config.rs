//! Store configuration: the files `init` writes and their loaded form.

use std::fs;
use std::path::Path;

use gera_core::digest::canonical_digest;
use gera_core::inventory::AnomalyConfig;
use gera_core::reconcile::MatchSpecSet;
use gera_core::semantic::{Catalog, Registry};
use gera_core::staging::{
    Crosswalk, CrosswalkSet, NormalizationRuleSet, QualityAssertionSet, SchemaRegistry,
};
use gera_core::EntityKind;
use serde_json::{json, Value};

use crate::error::{invalid, GeraError, Result};
use crate::store::{self, Store};

/// Governed objects that are not metric sources.
pub const REPORT_OBJECTS: [&str; 4] = [
    "exceptions",
    "recon_report",
    "inventory_aging",
    "anomaly_flags",
];

pub struct Config {
    pub rules: NormalizationRuleSet,
    pub crosswalks: CrosswalkSet,
    pub schemas: SchemaRegistry,
    pub assertions: QualityAssertionSet,
    pub matchspecs: MatchSpecSet,
    pub anomaly: AnomalyConfig,
    pub catalog: Catalog,
    pub metrics: Registry,
}

impl Config {
    pub fn load(store: &Store) -> Result<Config> {
        let text = |name: &str| -> Result<String> {
            let path = store.config(name);
            if !path.exists() {
                return Err(invalid(format!(
                    "{} is missing; run `gera init` first",
                    path.display()
                )));
            }
            store::read_string(&path)
        };
        let bad = |name: &str, e: &dyn std::fmt::Display| invalid(format!("config/{name}: {e}"));

        let rules = NormalizationRuleSet::from_json(&text("rules.json")?)
            .map_err(|e| bad("rules.json", &e))?;
        let crosswalks = load_crosswalks(store)?;
        for name in rules.crosswalk_names() {
            if crosswalks.get(name).is_none() {
                return Err(invalid(format!("config/rules.json references crosswalk `{name}` with no file in config/crosswalks")));
            }
        }
        let schemas = SchemaRegistry::from_json(&text("schemas.json")?)
            .map_err(|e| bad("schemas.json", &e))?;

        let mut catalog = Catalog::standard();
        for (kind, field, ty) in rules.extra_fields() {
            catalog.add_entity_field(kind, &field, ty);
        }
        let assertions =
            QualityAssertionSet::from_json(&text("assertions.json")?, |kind, field| {
                catalog.field_type(kind.as_str(), field).is_some()
            })
            .map_err(|e| bad("assertions.json", &e))?;
        let matchspecs = MatchSpecSet::from_json(&text("matchspecs.json")?)
            .map_err(|e| bad("matchspecs.json", &e))?;
        let anomaly = AnomalyConfig::from_json(&text("anomaly.json")?)
            .map_err(|e| bad("anomaly.json", &e))?;
        let metrics = load_metrics(store, &catalog)?;
        Ok(Config {
            rules,
            crosswalks,
            schemas,
            assertions,
            matchspecs,
            anomaly,
            catalog,
            metrics,
        })
    }

    /// Digest of the settings that replay depends on. Staging settings are
    /// excluded: staged records carry their own config version.
    pub fn replay_digest(&self) -> String {
        canonical_digest(&(&self.matchspecs, &self.anomaly))
    }

    /// Every name a policy may refer to.
    pub fn is_known_object(&self, name: &str) -> bool {
        REPORT_OBJECTS.contains(&name)
            || self.catalog.source(name).is_some()
            || self.metrics.get(name).is_some()
    }
}

fn load_crosswalks(store: &Store) -> Result<CrosswalkSet> {
    let dir = store.config("crosswalks");
    let mut set = CrosswalkSet::default();
    for path in sorted_files(&dir, "json")? {
        let text = store::read_string(&path)?;
        let table =
            Crosswalk::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        set.insert(table);
    }
    Ok(set)
}

fn load_metrics(store: &Store, catalog: &Catalog) -> Result<Registry> {
    let dir = store.metrics_dir();
    let mut files = Vec::new();
    for path in sorted_files(&dir, "metric")? {
        let name = format!(
            "metrics/{}",
            path.file_name().unwrap_or_default().to_string_lossy()
        );
        files.push((name, store::read_string(&path)?));
    }
    Registry::from_files(&files, catalog).map_err(|errors| {
        invalid(
            errors
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("\n"),
        )
    })
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(GeraError::io(dir, e)),
    };
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| GeraError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == ext) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Writes the default configuration, leaving existing files alone.
/// Returns the files it created.
pub fn init(store: &Store) -> Result<Vec<String>> {
    let mut created = Vec::new();
    for (rel, bytes) in default_files() {
        let path = store.path(&rel);
        if !path.exists() {
            store::write_atomic(&path, &bytes)?;
            created.push(rel);
        }
    }
    for dir in ["raw", "staged", "quarantine", "recon", "inventory", "audit"] {
        let path = store.path(dir);
        fs::create_dir_all(&path).map_err(|e| GeraError::io(&path, e))?;
    }
    Ok(created)
}

pub fn default_files() -> Vec<(String, Vec<u8>)> {
    let mut files = vec![
        (
            "config/rules.json".to_string(),
            store::to_json_file(&default_rules()),
        ),
        (
            "config/schemas.json".to_string(),
            store::to_json_file(&default_schemas()),
        ),
        (
            "config/assertions.json".to_string(),
            store::to_json_file(&default_assertions()),
        ),
        (
            "config/matchspecs.json".to_string(),
            store::to_json_file(&MatchSpecSet::builtin()),
        ),
        (
            "config/anomaly.json".to_string(),
            store::to_json_file(&AnomalyConfig::default()),
        ),
        (
            "config/policies.json".to_string(),
            store::to_json_file(&default_policies()),
        ),
        (
            "config/crosswalks/circuit_to_account.json".to_string(),
            store::to_json_file(&json!({
                "name": "circuit_to_account",
                "source_pattern": "##########",
                "target_pattern": "@@##########",
                "entries": {}
            })),
        ),
    ];
    for (name, text) in DEFAULT_METRICS {
        files.push((format!("metrics/{name}.metric"), text.as_bytes().to_vec()));
    }
    files
}

const DEFAULT_METRICS: [(&str, &str); 4] = [
    (
        "active_subscriber_count",
        "metric active_subscriber_count {\n    source: activations;\n    filter: status = \"active\" and not trial;\n    agg: count_distinct(subscriber_id)\n}\n",
    ),
    (
        "inventory_on_hand_by_aging_class",
        "metric inventory_on_hand_by_aging_class {\n    source: inventory_lots;\n    agg: sum(remaining_qty);\n    grain: bucket\n}\n",
    ),
    (
        "billing_reconciliation_rate",
        "metric billing_matched_count {\n    source: recon_left;\n    filter: spec = \"activation_billing\" and matched;\n    agg: count\n}\n\n\
         metric billing_eligible_count {\n    source: recon_left;\n    filter: spec = \"activation_billing\" and eligible;\n    agg: count\n}\n\n\
         metric billing_reconciliation_rate {\n    agg: ratio(billing_matched_count, billing_eligible_count)\n}\n",
    ),
    (
        "cost_per_passing",
        "metric installed_cost {\n    source: installation;\n    agg: sum(cost)\n}\n\n\
         metric installed_passings {\n    source: installation;\n    agg: sum(passings)\n}\n\n\
         metric cost_per_passing {\n    agg: ratio(installed_cost, installed_passings)\n}\n",
    ),
];

fn id() -> Value {
    json!([{"op": "trim"}])
}

fn upper() -> Value {
    json!([{"op": "trim"}, {"op": "case_fold", "to": "upper"}])
}

fn lower() -> Value {
    json!([{"op": "trim"}, {"op": "case_fold", "to": "lower"}])
}

fn material() -> Value {
    json!([{"op": "trim"}, {"op": "strip_leading_zeros"}])
}

fn date(from: &str, formats: &[&str]) -> Value {
    json!({"name": "event_date", "from": from, "rules": [{"op": "trim"}, {"op": "date_parse", "formats": formats}]})
}

fn field(name: &str, rules: Value) -> Value {
    json!({"name": name, "rules": rules})
}

fn field_from(name: &str, from: &str, rules: Value) -> Value {
    json!({"name": name, "from": from, "rules": rules})
}

const ISO: &[&str] = &["YYYY-MM-DD"];

fn default_rules() -> Value {
    let supply = |id_name: &str, date_col: &str| {
        json!([
            field(id_name, id()),
            field("po_id", id()),
            field_from("material_code", "material", material()),
            field("location_id", upper()),
            field("quantity", id()),
            date(date_col, ISO),
        ])
    };
    json!({
        "entities": {
            "service_order": [
                field("order_id", id()), field("subscriber_id", id()), field("location_id", upper()),
                field("status", lower()), field("plan", lower()), date("order_date", ISO),
            ],
            "provisioning_event": [
                field("order_id", id()), field("circuit_id", id()),
                field_from("account_id", "circuit_id", json!([{"op": "trim"}, {"op": "crosswalk_lookup", "crosswalk": "circuit_to_account"}])),
                field("subscriber_id", id()), field("location_id", upper()),
                field("status", lower()), field("trial", lower()),
                date("activated_at", &["YYYY-MM-DDTHH:mm:ssZZ", "YYYY-MM-DD"]),
            ],
            "invoice_line": [
                field("invoice_id", id()), field("order_id", id()), field_from("account_id", "acct", upper()),
                field("subscriber_id", id()), field("location_id", upper()), field("amount", id()),
                date("invoice_date", &["MM/DD/YYYY", "YYYY-MM-DD"]),
            ],
            "payment_settlement": [
                field("payment_ref", id()), field("invoice_id", id()), field("subscriber_id", id()),
                field("location_id", upper()), field("amount", id()), date("settled_on", ISO),
            ],
            "purchase_order": [
                field("po_id", id()), field_from("material_code", "material", material()), field("location_id", upper()),
                field("quantity", id()), date("po_date", ISO),
            ],
            "receiving": supply("receipt_id", "received"),
            "issuance": supply("issue_id", "issued"),
            "installation": [
                field("install_id", id()), field("po_id", id()), field("material_code", material()),
                field("location_id", upper()), field("quantity", id()), field("cost", id()), field("passings", id()),
                date("installed_on", ISO),
            ],
            "inventory_movement": [
                field("movement_id", id()), field_from("material_code", "material", material()),
                field("location_id", upper()), field("quantity", id()), date("moved", ISO),
            ],
        }
    })
}

fn columns(specs: &[(&str, &str, bool)]) -> Value {
    let cols: Vec<Value> = specs
        .iter()
        .map(|(name, ty, required)| json!({"name": name, "type": ty, "required": required}))
        .collect();
    json!({ "columns": cols })
}

fn default_schemas() -> Value {
    json!({
        "oss_orders/service_order": columns(&[
            ("order_id", "str", true), ("subscriber_id", "str", true), ("location_id", "str", true),
            ("status", "str", false), ("plan", "str", false), ("order_date", "str", true),
        ]),
        "oss_provisioning/provisioning_event": columns(&[
            ("order_id", "str", true), ("circuit_id", "str", true), ("subscriber_id", "str", true),
            ("location_id", "str", true), ("status", "str", false), ("trial", "bool", false), ("activated_at", "str", true),
        ]),
        "billing/invoice_line": columns(&[
            ("invoice_id", "str", true), ("order_id", "str", false), ("acct", "str", true), ("subscriber_id", "str", true),
            ("location_id", "str", false), ("amount", "number", true), ("invoice_date", "str", true),
        ]),
        "payments/payment_settlement": columns(&[
            ("payment_ref", "str", true), ("invoice_id", "str", true), ("subscriber_id", "str", true),
            ("location_id", "str", false), ("amount", "number", false), ("settled_on", "str", true),
        ]),
        "erp_supply/purchase_order": columns(&[
            ("po_id", "str", true), ("material", "str", true), ("location_id", "str", true),
            ("quantity", "integer", false), ("po_date", "str", true),
        ]),
        "erp_supply/receiving": columns(&[
            ("receipt_id", "str", true), ("po_id", "str", true), ("material", "str", true),
            ("location_id", "str", true), ("quantity", "integer", true), ("received", "str", true),
        ]),
        "erp_supply/issuance": columns(&[
            ("issue_id", "str", true), ("po_id", "str", true), ("material", "str", true),
            ("location_id", "str", true), ("quantity", "integer", true), ("issued", "str", true),
        ]),
        "field_contractor/installation": columns(&[
            ("install_id", "str", true), ("po_id", "str", true), ("material_code", "str", true), ("location_id", "str", true),
            ("quantity", "integer", false), ("cost", "number", false), ("passings", "integer", false), ("installed_on", "str", true),
        ]),
        "erp_supply/inventory_movement": columns(&[
            ("movement_id", "str", true), ("material", "str", true), ("location_id", "str", true),
            ("quantity", "integer", true), ("moved", "str", true),
        ]),
    })
}

fn default_assertions() -> Value {
    let pe = EntityKind::ProvisioningEvent.as_str();
    json!({
        "assertions": [
            {"kind": "not_null", "entity_kind": pe, "field": "subscriber_id"},
            {"kind": "accepted_values", "entity_kind": pe, "field": "status", "values": ["active", "cancelled", "pending", "suspended"]},
            {"kind": "accepted_range", "entity_kind": "receiving", "field": "quantity", "min": "0", "max": "100000"},
            {"kind": "accepted_range", "entity_kind": "issuance", "field": "quantity", "min": "0", "max": "100000"},
            {"kind": "referential", "entity_kind": "invoice_line", "field": "order_id", "target_kind": "service_order", "target_field": "order_id"},
        ]
    })
}

fn default_policies() -> Value {
    let mut policies = vec![json!({"role": "admin", "object": "*", "territory": "*"})];
    for region in ["NE", "NW", "SE", "SW"] {
        policies.push(json!({
            "role": format!("regional_ops_{region}"),
            "object": "*",
            "territory": {"field": "location_id", "values": [region]}
        }));
    }
    json!({ "policies": policies })
}
