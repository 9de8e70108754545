//! The binary end to end: exit codes, idempotency and refusals.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Gera {
    dir: TempDir,
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl From<Output> for Run {
    fn from(o: Output) -> Run {
        Run {
            code: o.status.code().expect("exited"),
            stdout: String::from_utf8(o.stdout).expect("utf-8 stdout"),
            stderr: String::from_utf8(o.stderr).expect("utf-8 stderr"),
        }
    }
}

impl Gera {
    fn new() -> Gera {
        Gera {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn store(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Run {
        Command::new(env!("CARGO_BIN_EXE_gera"))
            .env_remove("GERA_ROLE")
            .env_remove("GERA_STORE")
            .arg("--store")
            .arg(self.store())
            .args(args)
            .output()
            .unwrap()
            .into()
    }

    fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "gera {args:?} failed: {}", r.stderr);
        r.stdout
    }

    fn init(self) -> Gera {
        self.ok(&["init"]);
        self
    }

    /// Generates and loads a scenario; returns its settles_by date.
    fn scenario(&self, config: &str) -> String {
        let cfg = self.file("scenario.json", config);
        let out = self.dir.path().join("scenario");
        self.ok(&[
            "synth",
            "generate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        self.ok(&["synth", "load", out.to_str().unwrap()]);
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        manifest["settles_by"].as_str().unwrap().to_string()
    }

    fn manifest(&self) -> PathBuf {
        self.dir.path().join("scenario").join("manifest.json")
    }
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

const ORDERS: &str = "order_id,subscriber_id,location_id,status,plan,order_date\nSO-1,SUB-1,NE,active,basic,2026-01-02\nSO-2,SUB-2,NW,active,plus,2026-01-02\n";
const FAULTY: &str = r#"{"seed":21,"subscribers":120,"start":"2026-01-01","days":20,
    "faults":[{"kind":"silent_mapping_failure","count":4},{"kind":"quantity_typo","count":1}]}"#;

#[test]
fn init_is_idempotent() {
    let g = Gera::new();
    assert!(g.ok(&["init"]).contains("created config/rules.json"));
    assert_eq!(g.ok(&["init"]), "configuration already present\n");
}

#[test]
fn commands_before_init_name_the_missing_file() {
    let g = Gera::new();
    let r = g.run(&["run", "--as-of", "2026-01-02"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("gera init"), "{}", r.stderr);
}

#[test]
fn bad_arguments_exit_one() {
    let g = Gera::new().init();
    assert_eq!(g.run(&["run", "--as-of", "02/01/2026"]).code, 1);
    assert_eq!(
        g.run(&[
            "ingest",
            "x.csv",
            "--source",
            "s",
            "--entity",
            "gadget",
            "--as-of",
            "2026-01-01"
        ])
        .code,
        1
    );
    assert_eq!(g.run(&["--version"]).code, 0);
}

#[test]
fn reingesting_identical_bytes_writes_nothing() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    let args = [
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ];
    let first: serde_json::Value = serde_json::from_str(&g.ok(&args)).unwrap();
    assert_eq!(first["records_written"], 2);
    assert!(first["duplicate_of"].is_null());
    let before = tree(&g.store().join("raw"));
    let second: serde_json::Value = serde_json::from_str(&g.ok(&args)).unwrap();
    assert_eq!(second["records_written"], 0);
    assert!(second["duplicate_of"]
        .as_str()
        .unwrap()
        .contains(first["batch_hash"].as_str().unwrap()));
    assert_eq!(tree(&g.store().join("raw")), before);
}

#[test]
fn bad_rows_reject_the_whole_file_with_line_numbers() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", "order_id,subscriber_id,location_id,status,plan,order_date\nSO-1,SUB-1,NE,active,basic,2026-13-40\nSO-2,SUB-2,NW,active,plus,2026-01-02\n");
    let r = g.run(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains(":2:"), "{}", r.stderr);
    assert!(!g.store().join("raw").join("MANIFEST.json").exists());
}

#[test]
fn tampered_raw_batch_is_an_integrity_failure() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    assert_eq!(g.ok(&["raw", "verify"]), "raw store verified\n");
    let dir = g.store().join("raw/oss_orders/2026-01-02");
    let batch = std::fs::read_dir(&dir)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let text = std::fs::read_to_string(&batch)
        .unwrap()
        .replace("SUB-1", "SUB-9");
    std::fs::write(&batch, text).unwrap();
    let r = g.run(&["raw", "verify"]);
    assert_eq!(r.code, 2);
    assert!(r.stdout.contains("oss_orders/2026-01-02"), "{}", r.stdout);
    assert_eq!(g.run(&["run", "--as-of", "2026-01-02"]).code, 2);
}

#[test]
fn raw_replay_returns_stored_records() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    let out = g.ok(&[
        "raw",
        "replay",
        "--source",
        "oss_orders",
        "--from",
        "2026-01-01",
        "--to",
        "2026-01-03",
    ]);
    assert_eq!(out.lines().count(), 2);
    assert!(out.contains("\"SUB-2\""));
    assert_eq!(
        g.ok(&[
            "raw",
            "replay",
            "--source",
            "oss_orders",
            "--from",
            "2026-01-03",
            "--to",
            "2026-01-09"
        ]),
        ""
    );
}

#[test]
fn repeated_run_is_a_no_op_and_rewinding_is_refused() {
    let g = Gera::new().init();
    let settles = g.scenario(FAULTY);
    g.ok(&["run", "--as-of", &settles]);
    let before = tree(&g.store());
    let again: serde_json::Value =
        serde_json::from_str(&g.ok(&["run", "--as-of", &settles])).unwrap();
    assert_eq!(again["new_events"], 0);
    assert_eq!(tree(&g.store()), before);
    let r = g.run(&["run", "--as-of", "2026-01-05"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("processed through"), "{}", r.stderr);
}

#[test]
fn changing_match_config_after_a_run_is_refused() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    g.ok(&["run", "--as-of", "2026-01-02"]);
    let path = g.store().join("config/matchspecs.json");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"escalation_days\": 14", "\"escalation_days\": 10");
    std::fs::write(&path, text).unwrap();
    assert_eq!(g.run(&["run", "--as-of", "2026-01-03"]).code, 2);
}

#[test]
fn reads_need_a_processed_day_and_a_role() {
    let g = Gera::new().init();
    let r = g.run(&[
        "metric",
        "eval",
        "active_subscriber_count",
        "--as-of",
        "2026-01-02",
        "--role",
        "admin",
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("2026-01-02"), "{}", r.stderr);
    let r = g.run(&[
        "metric",
        "eval",
        "active_subscriber_count",
        "--as-of",
        "2026-01-02",
    ]);
    assert_eq!(r.code, 1);
    let r = g.run(&[
        "metric",
        "eval",
        "no_such_metric",
        "--as-of",
        "2026-01-02",
        "--role",
        "admin",
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("no_such_metric"), "{}", r.stderr);
}

#[test]
fn role_can_come_from_the_environment() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    g.ok(&["run", "--as-of", "2026-01-02"]);
    let out = Command::new(env!("CARGO_BIN_EXE_gera"))
        .env("GERA_ROLE", "admin")
        .env("GERA_STORE", g.store())
        .args(["recon", "report", "--as-of", "2026-01-02"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn exceptions_resolve_and_assign_on_the_processed_day() {
    let g = Gera::new().init();
    let settles = g.scenario(FAULTY);
    g.ok(&["run", "--as-of", &settles]);
    let open = g.ok(&[
        "exceptions",
        "list",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--open",
        "--json",
    ]);
    assert_eq!(open.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(open.lines().next().unwrap()).unwrap();
    let id = first["exception_id"].as_str().unwrap();

    let r = g.run(&[
        "exceptions",
        "resolve",
        id,
        "--as-of",
        "2026-01-10",
        "--role",
        "admin",
        "--owner",
        "kim",
        "--note",
        "x",
    ]);
    assert_eq!(r.code, 1, "stale as_of must be refused");
    g.ok(&[
        "exceptions",
        "assign",
        id,
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--owner",
        "kim",
    ]);
    g.ok(&[
        "exceptions",
        "resolve",
        id,
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--owner",
        "kim",
        "--note",
        "crosswalk fixed",
    ]);
    let open = g.ok(&[
        "exceptions",
        "list",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--open",
        "--json",
    ]);
    assert_eq!(open.lines().count(), 3);
    let all = g.ok(&[
        "exceptions",
        "list",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--json",
    ]);
    assert!(all.contains("\"resolved_manual\"") && all.contains("crosswalk fixed"));
    let r = g.run(&[
        "exceptions",
        "resolve",
        id,
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--owner",
        "kim",
        "--note",
        "again",
    ]);
    assert_eq!(r.code, 1, "closed exceptions stay closed");

    // Manual events survive the replay that verifies every later run.
    let next = g.run(&["run", "--as-of", &settles]);
    assert_eq!(next.code, 0, "{}", next.stderr);
}

#[test]
fn regional_roles_cannot_touch_other_regions() {
    let g = Gera::new().init();
    let settles = g.scenario(FAULTY);
    g.ok(&["run", "--as-of", &settles]);
    let all = g.ok(&[
        "exceptions",
        "list",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--json",
    ]);
    let mut total = 0;
    for region in ["NE", "NW", "SE", "SW"] {
        let role = format!("regional_ops_{region}");
        let seen = g.ok(&[
            "exceptions",
            "list",
            "--as-of",
            &settles,
            "--role",
            &role,
            "--json",
        ]);
        for line in seen.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["territory"], region);
        }
        total += seen.lines().count();
    }
    assert_eq!(total, all.lines().count());
    let first: serde_json::Value = serde_json::from_str(all.lines().next().unwrap()).unwrap();
    let other = if first["territory"] == "NE" {
        "regional_ops_SW"
    } else {
        "regional_ops_NE"
    };
    let r = g.run(&[
        "exceptions",
        "assign",
        first["exception_id"].as_str().unwrap(),
        "--as-of",
        &settles,
        "--role",
        other,
        "--owner",
        "x",
    ]);
    assert_eq!(r.code, 1);
}

#[test]
fn anomaly_flags_can_be_disposed() {
    let g = Gera::new().init();
    let settles = g.scenario(FAULTY);
    g.ok(&["run", "--as-of", &settles]);
    let queue = g.ok(&[
        "inventory",
        "flags",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--json",
    ]);
    assert!(!queue.is_empty(), "the typo should be flagged");
    let line: serde_json::Value = serde_json::from_str(queue.lines().next().unwrap()).unwrap();
    let before = queue.lines().count();
    for id in line["flag_ids"].as_array().unwrap() {
        g.ok(&[
            "inventory",
            "dispose",
            id.as_str().unwrap(),
            "--as-of",
            &settles,
            "--role",
            "admin",
            "--disposition",
            "confirmed",
            "--note",
            "typo",
        ]);
    }
    let after = g.ok(&[
        "inventory",
        "flags",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--json",
    ]);
    assert_eq!(after.lines().count(), before - 1);
    let r = g.run(&[
        "inventory",
        "dispose",
        "nope",
        "--as-of",
        &settles,
        "--role",
        "admin",
        "--disposition",
        "confirmed",
    ]);
    assert_eq!(r.code, 1);
    let score = g.ok(&[
        "synth",
        "score",
        "--manifest",
        g.manifest().to_str().unwrap(),
        "--as-of",
        &settles,
    ]);
    assert!(score.contains("quantity_typo"));
}

#[test]
fn reports_render_as_text_and_json() {
    let g = Gera::new().init();
    let settles = g.scenario(FAULTY);
    g.ok(&["run", "--as-of", &settles]);
    let text = g.ok(&["recon", "report", "--as-of", &settles, "--role", "admin"]);
    assert!(text.contains("activation_billing"));
    let json: serde_json::Value = serde_json::from_str(&g.ok(&[
        "recon", "report", "--as-of", &settles, "--role", "admin", "--json",
    ]))
    .unwrap();
    assert!(json.is_object());
    let aging = g.ok(&["inventory", "aging", "--as-of", &settles, "--role", "admin"]);
    assert!(aging.contains("0-30"));
    let metrics = g.ok(&["metric", "list"]);
    assert!(metrics.contains("active_subscriber_count"));
    let report = g.ok(&[
        "metric", "report", "--as-of", &settles, "--role", "admin", "--json",
    ]);
    assert_eq!(report.lines().count(), metrics.lines().count());
}

#[test]
fn policy_changes_are_admin_only_and_audited() {
    let g = Gera::new().init();
    let current = std::fs::read_to_string(g.store().join("config/policies.json")).unwrap();
    let next = current.replace("regional_ops_NE", "regional_ops_NORTHEAST");
    let f = g.file("policies.json", &next);
    let path = f.to_str().unwrap();
    assert_eq!(
        g.run(&[
            "policy",
            "load",
            path,
            "--as-of",
            "2026-01-02",
            "--role",
            "regional_ops_NE"
        ])
        .code,
        1
    );
    assert!(g
        .ok(&[
            "policy",
            "load",
            path,
            "--as-of",
            "2026-01-02",
            "--role",
            "admin"
        ])
        .contains("audit seq 1"));
    assert!(g
        .ok(&[
            "policy",
            "load",
            path,
            "--as-of",
            "2026-01-02",
            "--role",
            "admin"
        ])
        .contains("nothing recorded"));
    assert!(g.ok(&["policy", "show"]).contains("regional_ops_NORTHEAST"));
    let log = std::fs::read_to_string(g.store().join("audit/log.ndjson")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains("admin_policy_change"), "{log}");
}

#[test]
fn tampered_audit_log_blocks_reads() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    g.ok(&["run", "--as-of", "2026-01-02"]);
    for _ in 0..3 {
        g.ok(&[
            "recon",
            "report",
            "--as-of",
            "2026-01-02",
            "--role",
            "admin",
        ]);
    }
    assert!(g.ok(&["audit", "verify"]).contains("events=3"));
    let path = g.store().join("audit/log.ndjson");
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let tampered = format!(
        "{}\n{}\n{}\n",
        lines[0],
        lines[1].replacen("\"row_count\":", "\"row_count\":1", 1),
        lines[2]
    );
    std::fs::write(&path, tampered).unwrap();
    let r = g.run(&["audit", "verify"]);
    assert_eq!(r.code, 2);
    assert!(r.stdout.contains("sequence 2"), "{}", r.stdout);
    assert_eq!(
        g.run(&[
            "recon",
            "report",
            "--as-of",
            "2026-01-02",
            "--role",
            "admin"
        ])
        .code,
        2
    );
}

#[test]
fn compaction_keeps_the_log_verifiable() {
    let g = Gera::new().init();
    let f = g.file("orders.csv", ORDERS);
    g.ok(&[
        "ingest",
        f.to_str().unwrap(),
        "--source",
        "oss_orders",
        "--entity",
        "service_order",
        "--as-of",
        "2026-01-02",
    ]);
    for day in ["2026-01-02", "2026-01-20"] {
        g.ok(&["run", "--as-of", day]);
        g.ok(&["recon", "report", "--as-of", day, "--role", "admin"]);
    }
    assert_eq!(
        g.ok(&[
            "audit",
            "compact",
            "--as-of",
            "2026-01-25",
            "--retention-days",
            "10"
        ]),
        "audit log compacted\n"
    );
    let out = g.ok(&["audit", "verify"]);
    assert!(out.contains("events=2 head_seq=1 tail_seq=2"), "{out}");
    let log = std::fs::read_to_string(g.store().join("audit/log.ndjson")).unwrap();
    assert!(
        log.lines().next().unwrap().contains("retention_tombstone"),
        "{log}"
    );
    assert_eq!(
        g.ok(&[
            "audit",
            "compact",
            "--as-of",
            "2026-01-25",
            "--retention-days",
            "10"
        ]),
        "nothing to compact\n"
    );
}
