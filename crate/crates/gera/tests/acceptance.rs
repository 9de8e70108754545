//! Acceptance criteria 1 to 12. Each prints one PASS or FAIL line; the
//! process exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::{Duration, Instant};

use gera::config::{self, Config};
use gera::governed::{self, Session};
use gera::pipeline::{self, DEFAULT_LOOKBACK_DAYS};
use gera::raw::{self, IngestOutcome, IngestRequest, SourceFormat};
use gera::store::{self, Store};
use gera::synth_io;
use gera_core::date::{add_days, day_range, days_between, parse_iso, Date};
use gera_core::governance::{Action, AuditEntry, Principal};
use gera_core::inventory::stats::Baseline;
use gera_core::inventory::{exceeds, fifo_age, score, Bucket, Method, Score, MAD_SCALE};
use gera_core::reconcile::{dedup_and_aggregate, join_at_grain, Aggregation, GrainSpec, Measure};
use gera_core::semantic::Row;
use gera_core::staging::{Quality, StagedRecord};
use gera_core::synth::{generate, FaultKind, GroundTruthManifest, ScenarioConfig};
use gera_core::EntityKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use tempfile::TempDir;

/// Absolute tolerance for detector scores.
const SCORE_TOL: f64 = 1e-9;
/// Wall-clock budget for the 10^5-row pipeline.
const PERF_BUDGET: Duration = Duration::from_secs(60);
const PERF_MIN_ROWS: u64 = 100_000;

type Outcome = Result<String, String>;

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn date(s: &str) -> Date {
    parse_iso(s).expect("literal date")
}

struct Fixture {
    dir: TempDir,
    store: Store,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().expect("tempdir");
        let store = Store::open(dir.path().join("store"));
        config::init(&store).expect("init");
        Fixture { dir, store }
    }

    fn cfg(&self) -> Result<Config, String> {
        Config::load(&self.store).map_err(err)
    }

    /// Generates a scenario into the fixture and loads extracts through `through`.
    fn scenario(
        &self,
        json: &str,
        through: Option<Date>,
    ) -> Result<(GroundTruthManifest, PathBuf), String> {
        let cfg = ScenarioConfig::from_json(json).map_err(err)?;
        let scenario = generate(&cfg).map_err(err)?;
        let out = self.dir.path().join("scenario");
        synth_io::write_scenario(&scenario, &out).map_err(err)?;
        synth_io::load(&self.store, &out, through).map_err(err)?;
        Ok((scenario.manifest, out))
    }

    fn run(&self, as_of: Date) -> Result<(), String> {
        let cfg = self.cfg()?;
        pipeline::run(&self.store, &cfg, as_of, DEFAULT_LOOKBACK_DAYS)
            .map(|_| ())
            .map_err(err)
    }

    fn ingest_csv(
        &self,
        text: &str,
        source: &str,
        kind: EntityKind,
        as_of: Date,
    ) -> Result<(), String> {
        let cfg = self.cfg()?;
        let req = IngestRequest {
            bytes: text.as_bytes(),
            format: SourceFormat::Csv,
            source_id: source,
            entity_kind: kind,
            as_of,
        };
        match raw::ingest(&self.store, &cfg.rules, &req).map_err(err)? {
            IngestOutcome::Written(_) => Ok(()),
            IngestOutcome::Rejected(r) => Err(r.to_string()),
        }
    }

    fn bytes(&self, path: &Path) -> Vec<u8> {
        store::read_optional(path)
            .expect("readable")
            .unwrap_or_default()
    }
}

// ------------------------------------------------------------- criterion 1

fn silent_mapping_failures() -> Outcome {
    let fx = Fixture::new();
    let json = r#"{"seed":7,"subscribers":500,"start":"2026-01-01","days":30,
        "faults":[{"kind":"silent_mapping_failure","count":25}]}"#;
    let (manifest, dir) = fx.scenario(json, None)?;
    let as_of = manifest.settles_by;
    fx.run(as_of)?;
    let cfg = fx.cfg()?;
    let replay = pipeline::replay(&fx.store, &cfg, as_of).map_err(err)?;
    let unmatched = replay
        .engine
        .book()
        .iter()
        .filter(|e| e.category.as_str() == "unmatched")
        .count();
    let total = replay.engine.book().iter().count();
    ensure!(
        unmatched == 25 && total == 25,
        "unmatched {unmatched}, total exceptions {total}"
    );
    let report = synth_io::score_store(&fx.store, &cfg, &dir.join(synth_io::MANIFEST_FILE), as_of)
        .map_err(err)?;
    let k = report.kind(FaultKind::SilentMappingFailure);
    ensure!(
        k.recall == Some(1.0) && k.precision == Some(1.0),
        "recall {:?} precision {:?}",
        k.recall,
        k.precision
    );
    Ok(format!(
        "25 unmatched at {as_of}, recall 1.0, precision 1.0"
    ))
}

// ------------------------------------------------------------- criterion 2

fn zero_fault() -> Outcome {
    let fx = Fixture::new();
    let (manifest, _) = fx.scenario(
        r#"{"seed":3,"subscribers":500,"start":"2026-01-01","days":30}"#,
        None,
    )?;
    fx.run(manifest.settles_by)?;
    let cfg = fx.cfg()?;
    let replay = pipeline::replay(&fx.store, &cfg, manifest.settles_by).map_err(err)?;
    let exceptions = replay.engine.book().iter().count();
    let events = fx.bytes(&fx.store.exceptions()).len();
    let flags = fx.bytes(&fx.store.flags()).len();
    ensure!(
        exceptions == 0 && events == 0,
        "{exceptions} exceptions, {events} bytes of events"
    );
    ensure!(
        replay.flags.is_empty() && flags == 0,
        "{} anomaly flags",
        replay.flags.len()
    );
    Ok(format!(
        "0 exceptions, 0 flags through {}",
        manifest.settles_by
    ))
}

// ------------------------------------------------------------- criterion 3

fn lifecycle() -> Outcome {
    let fx = Fixture::new();
    let crosswalk = serde_json::json!({
        "name": "circuit_to_account",
        "source_pattern": "##########",
        "target_pattern": "@@##########",
        "entries": {"4150000001": "NE4150000001"}
    });
    store::write_atomic(
        &fx.store
            .config("crosswalks")
            .join("circuit_to_account.json"),
        crosswalk.to_string().as_bytes(),
    )
    .map_err(err)?;
    let activation = date("2026-01-02");
    fx.ingest_csv(
        "order_id,subscriber_id,location_id,status,plan,order_date\nSO-1,SUB-1,NE,active,basic,2026-01-02\n",
        "oss_orders",
        EntityKind::ServiceOrder,
        activation,
    )?;
    fx.ingest_csv(
        "order_id,circuit_id,subscriber_id,location_id,status,trial,activated_at\n\
         SO-1,4150000001,SUB-1,NE,active,false,2026-01-02T10:00:00+00:00\n",
        "oss_provisioning",
        EntityKind::ProvisioningEvent,
        activation,
    )?;
    let view = |as_of: Date| -> Result<Option<(Date, i64, bool, String)>, String> {
        let cfg = fx.cfg()?;
        let session = Session::open(&fx.store, &cfg, "admin", &[]).map_err(err)?;
        let views = session.exceptions(as_of, false).map_err(err)?;
        ensure!(views.len() <= 1, "{} exceptions", views.len());
        Ok(views.first().map(|v| {
            (
                v.exception.opened_as_of,
                v.age_days,
                v.escalated,
                v.exception.status.as_str().to_string(),
            )
        }))
    };
    fx.run(date("2026-01-31"))?;
    ensure!(
        view(date("2026-01-31"))?.is_none(),
        "exception open before the window expired"
    );
    // The window's last day still admits a match, so expiry is observed the day after.
    fx.run(date("2026-02-01"))?;
    ensure!(
        view(date("2026-02-01"))?.is_none(),
        "exception open on the window's last day"
    );
    fx.run(date("2026-02-02"))?;
    let Some((opened, _, _, _)) = view(date("2026-02-02"))? else {
        return Err("no exception on 2026-02-02".into());
    };
    ensure!(opened == date("2026-02-01"), "opened_as_of {opened}");
    fx.run(date("2026-02-14"))?;
    let (_, age, escalated, _) = view(date("2026-02-14"))?.expect("still present");
    ensure!(
        age == 13 && !escalated,
        "2026-02-14: age {age} escalated {escalated}"
    );
    fx.run(date("2026-02-15"))?;
    let (_, age, escalated, _) = view(date("2026-02-15"))?.expect("still present");
    ensure!(
        age == 14 && escalated,
        "2026-02-15: age {age} escalated {escalated}"
    );
    let late = date("2026-02-20");
    fx.ingest_csv(
        "invoice_id,order_id,acct,subscriber_id,location_id,amount,invoice_date\nINV-1,SO-1,ne4150000001,SUB-1,NE,49.00,02/20/2026\n",
        "billing",
        EntityKind::InvoiceLine,
        late,
    )?;
    fx.run(late)?;
    let (_, _, _, status) = view(late)?.expect("still present");
    ensure!(
        status == "matched_late",
        "status after late invoice: {status}"
    );
    Ok("opened 2026-02-01, escalated at age 14 not 13, matched_late after invoice".into())
}

// ------------------------------------------------------------- criterion 4

fn outputs(fx: &Fixture, as_of: Date) -> BTreeMap<String, Vec<u8>> {
    let s = &fx.store;
    let mut files = BTreeMap::from([
        ("exceptions".to_string(), fx.bytes(&s.exceptions())),
        ("flags".to_string(), fx.bytes(&s.flags())),
        (
            "report.json".to_string(),
            fx.bytes(&s.recon_report(as_of, "json")),
        ),
        (
            "report.txt".to_string(),
            fx.bytes(&s.recon_report(as_of, "txt")),
        ),
    ]);
    if let Some(first) = pipeline::RunLedger::load(s)
        .ok()
        .and_then(|l| l.effective.values().min().copied())
    {
        for d in day_range(first, as_of) {
            files.insert(format!("snapshot {d}"), fx.bytes(&s.snapshot(d)));
        }
    }
    files
}

fn first_difference(
    a: &BTreeMap<String, Vec<u8>>,
    b: &BTreeMap<String, Vec<u8>>,
) -> Option<String> {
    a.keys()
        .chain(b.keys())
        .find(|k| a.get(*k) != b.get(*k))
        .cloned()
}

fn day_by_day_equals_batch() -> Outcome {
    let json = r#"{"seed":11,"subscribers":200,"start":"2026-01-01","days":40,"supply":{"days":60},
        "faults":[{"kind":"late_arrival","count":8},{"kind":"silent_mapping_failure","count":4},
                  {"kind":"quantity_typo","count":2}]}"#;
    let start = date("2026-01-01");
    let last = add_days(start, 59);

    let daily = Fixture::new();
    let cfg = ScenarioConfig::from_json(json).map_err(err)?;
    let scenario = generate(&cfg).map_err(err)?;
    let dir = daily.dir.path().join("scenario");
    synth_io::write_scenario(&scenario, &dir).map_err(err)?;
    for d in day_range(start, last) {
        synth_io::load(&daily.store, &dir, Some(d)).map_err(err)?;
        daily.run(d)?;
    }

    let batch = Fixture::new();
    batch.scenario(json, Some(last))?;
    batch.run(last)?;

    let a = outputs(&daily, last);
    let b = outputs(&batch, last);
    if let Some(k) = first_difference(&a, &b) {
        return Err(format!("day-by-day and batch differ in {k}"));
    }
    let events = a["exceptions"].iter().filter(|&&c| c == b'\n').count();
    ensure!(events > 0, "scenario produced no exception events");

    batch.run(last)?;
    let again = outputs(&batch, last);
    if let Some(k) = first_difference(&b, &again) {
        return Err(format!("repeated run changed {k}"));
    }
    Ok(format!(
        "60 daily runs == 1 batch run ({events} events, {} files compared); rerun identical",
        a.len()
    ))
}

// ------------------------------------------------------------- criterion 5

fn unit_fifo(movements: &[(Date, i64)], at: Date) -> Vec<(Date, i64)> {
    let mut sorted: Vec<_> = movements
        .iter()
        .filter(|(d, _)| *d <= at)
        .copied()
        .collect();
    sorted.sort_by_key(|&(d, q)| (d, q < 0));
    let mut units: VecDeque<Date> = VecDeque::new();
    for (d, q) in sorted {
        if q >= 0 {
            units.extend(std::iter::repeat_n(d, q as usize));
        } else {
            for _ in 0..-q {
                units.pop_front();
            }
        }
    }
    let mut lots: Vec<(Date, i64)> = Vec::new();
    for d in units {
        match lots.last_mut() {
            Some((last, n)) if *last == d => *n += 1,
            _ => lots.push((d, 1)),
        }
    }
    lots
}

fn fifo_histories() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let key = ("1001".to_string(), "NE".to_string());
    let start = date("2026-01-01");
    for h in 0..200 {
        let mut days: Vec<i64> = (0..rng.gen_range(1..25))
            .map(|_| rng.gen_range(0..90))
            .collect();
        days.sort_unstable();
        let mut balance = 0i64;
        let mut movements = Vec::new();
        for d in days {
            let qty = rng.gen_range(1..40);
            if rng.gen_bool(0.5) && balance > 0 {
                let q = qty.min(balance);
                balance -= q;
                movements.push((add_days(start, d), -q));
            } else {
                balance += qty;
                movements.push((add_days(start, d), qty));
            }
        }
        let at = add_days(start, rng.gen_range(0..120));
        let lots = fifo_age(&key, at, &movements).map_err(|e| format!("history {h}: {e}"))?;
        let on_hand: i64 = movements
            .iter()
            .filter(|(d, _)| *d <= at)
            .map(|(_, q)| q)
            .sum();
        let held: i64 = lots.iter().map(|l| l.remaining_qty).sum();
        ensure!(
            held == on_hand,
            "history {h}: lots hold {held}, on hand {on_hand}"
        );
        let got: Vec<(Date, i64)> = lots
            .iter()
            .map(|l| (l.received_date, l.remaining_qty))
            .collect();
        ensure!(
            got == unit_fifo(&movements, at),
            "history {h}: allocation differs from unit oracle"
        );
        for l in &lots {
            ensure!(
                l.age_days == days_between(l.received_date, at)
                    && l.bucket == Bucket::for_age(l.age_days),
                "history {h}: bad age"
            );
        }
    }
    let lots = fifo_age(&key, add_days(start, 30), &[(start, 5)]).map_err(err)?;
    ensure!(
        lots[0].age_days == 30 && lots[0].bucket == Bucket::D0To30,
        "30-day lot in {:?}",
        lots[0].bucket
    );
    Ok("200 histories conserve and match the unit oracle; age 30 in 0-30".into())
}

// ---------------------------------------------------------- criteria 6 and 7

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn brute_z(w: &[f64], x: f64) -> Option<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var > 0.0).then(|| (x - mean) / var.sqrt())
}

fn brute_m(w: &[f64], x: f64) -> Option<f64> {
    let med = median(w);
    let dev: Vec<f64> = w.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&dev);
    (mad > 0.0).then(|| MAD_SCALE * (x - med) / mad)
}

fn brute_hinges(w: &[f64]) -> (f64, f64) {
    let mut v = w.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = v.len() / 2;
    (median(&v[..h]), median(&v[v.len() - h..]))
}

fn detector_scores() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut flagged = 0;
    for i in 0..100 {
        let n = rng.gen_range(10..40);
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    f64::from(rng.gen_range(0..400)) / 4.0
                } else {
                    rng.gen_range(80.0..120.0)
                }
            })
            .collect();
        let b = Baseline::of(&w);
        for _ in 0..10 {
            let x = rng.gen_range(0.0..300.0);
            let z = brute_z(&w, x).expect("random windows vary");
            let Score::Finite(got) = score(Method::Zscore, &b, x) else {
                return Err(format!("window {i}: z not finite"));
            };
            ensure!((z - got).abs() < SCORE_TOL, "window {i}: z {z} vs {got}");
            ensure!(
                exceeds(Score::Finite(got), 3.0) == (z.abs() > 3.0),
                "window {i}: |z|>3 set differs at {x}"
            );
            flagged += usize::from(z.abs() > 3.0);
            match (brute_m(&w, x), score(Method::Mad, &b, x)) {
                (Some(m), Score::Finite(got)) => {
                    ensure!((m - got).abs() < SCORE_TOL, "window {i}: M {m} vs {got}")
                }
                (None, s) => ensure!(
                    s == Score::Finite(0.0) || s.abs().is_infinite(),
                    "window {i}: MAD=0 scored {s:?}"
                ),
                (Some(m), s) => return Err(format!("window {i}: M {m} scored {s:?}")),
            }
            let (q1, q3) = brute_hinges(&w);
            ensure!(
                (b.q1 - q1).abs() < SCORE_TOL && (b.q3 - q3).abs() < SCORE_TOL,
                "window {i}: quartiles"
            );
            let iqr = q3 - q1;
            ensure!(
                exceeds(score(Method::Iqr, &b, x), 1.5)
                    == (x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr),
                "window {i}: IQR fence"
            );
        }
    }
    let flat = Baseline::of(&[50.0; 12]);
    for m in Method::ALL {
        ensure!(
            score(m, &flat, 50.0) == Score::Finite(0.0),
            "{m:?}: sigma=0 at mean"
        );
        ensure!(
            score(m, &flat, 50.5) == Score::PosInf && score(m, &flat, 49.0) == Score::NegInf,
            "{m:?}: sigma=0 off mean"
        );
    }
    let mostly = Baseline::of(&[10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 11.0, 12.0, 10.0]);
    ensure!(
        mostly.mad == 0.0 && score(Method::Mad, &mostly, 10.5) == Score::PosInf,
        "MAD=0 rule"
    );
    Ok(format!("100 windows x 10 points within {SCORE_TOL:e}; {flagged} |z|>3 exact; zero-spread rules hold"))
}

fn contaminated_window() -> Outcome {
    let mut w: Vec<f64> = (0..29)
        .map(|i| 100.0 + [-2.0, -1.0, 0.0, 1.0, 2.0][i % 5])
        .collect();
    w.push(1000.0);
    let x = 110.0;
    let (z, m) = (brute_z(&w, x).unwrap(), brute_m(&w, x).unwrap());
    let b = Baseline::of(&w);
    let (Score::Finite(gz), Score::Finite(gm)) =
        (score(Method::Zscore, &b, x), score(Method::Mad, &b, x))
    else {
        return Err("non-finite score".into());
    };
    ensure!(z <= 3.0 && m > 3.5, "oracle z {z} M {m}");
    ensure!(
        gz <= 3.0 && gm > 3.5 && (gz - z).abs() < SCORE_TOL && (gm - m).abs() < SCORE_TOL,
        "engine z {gz} M {gm}"
    );
    Ok(format!("z {gz:.3} <= 3, M {gm:.3} > 3.5"))
}

// ------------------------------------------------------------- criterion 8

const ACTIVATIONS: &str =
    "order_id,circuit_id,subscriber_id,location_id,status,trial,activated_at\n\
    SO-1,4150000001,SUB-1,NE,active,false,2026-01-02T09:00:00+00:00\n\
    SO-2,4150000002,SUB-2,NW,Active,false,2026-01-02T09:10:00+00:00\n\
    SO-3,4150000003,SUB-3,SE,active,false,2026-01-02T09:20:00+00:00\n\
    SO-4,4150000004,SUB-4,SW,active,false,2026-01-02T09:30:00+00:00\n\
    SO-5,4150000005,SUB-5,NE,active,false,2026-01-02T09:40:00+00:00\n\
    SO-6,4150000006,SUB-6,NE,active,true,2026-01-02T09:50:00+00:00\n\
    SO-7,4150000007,SUB-7,NW,cancelled,false,2026-01-02T10:00:00+00:00\n\
    SO-8,4150000008,SUB-1,NE,active,false,2026-01-02T10:10:00+00:00\n";

/// Distinct subscribers on active, non-trial rows, read straight off the CSV.
fn brute_active(csv: &str) -> usize {
    let mut subs = BTreeSet::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[4].trim().eq_ignore_ascii_case("active")
            && !cols[5].trim().eq_ignore_ascii_case("true")
        {
            subs.insert(cols[2].trim());
        }
    }
    subs.len()
}

fn gera(store: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gera"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .map_err(err)?;
    ensure!(
        out.status.success(),
        "gera {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out.stdout)
}

fn metric_paths_agree() -> Outcome {
    let fx = Fixture::new();
    let day = date("2026-01-02");
    let entries: BTreeMap<String, String> = ACTIVATIONS
        .lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[1].to_string(), format!("{}{}", cols[3], cols[1]))
        })
        .collect();
    let crosswalk = serde_json::json!({
        "name": "circuit_to_account",
        "source_pattern": "##########",
        "target_pattern": "@@##########",
        "entries": entries
    });
    store::write_atomic(
        &fx.store
            .config("crosswalks")
            .join("circuit_to_account.json"),
        crosswalk.to_string().as_bytes(),
    )
    .map_err(err)?;
    fx.ingest_csv(
        ACTIVATIONS,
        "oss_provisioning",
        EntityKind::ProvisioningEvent,
        day,
    )?;
    fx.run(day)?;
    let root = fx.store.root();
    let eval = gera(
        root,
        &[
            "metric",
            "eval",
            "active_subscriber_count",
            "--as-of",
            "2026-01-02",
            "--role",
            "admin",
            "--json",
        ],
    )?;
    let report = gera(
        root,
        &[
            "metric",
            "report",
            "--as-of",
            "2026-01-02",
            "--role",
            "admin",
            "--json",
        ],
    )?;
    let line = report
        .split_inclusive(|&b| b == b'\n')
        .find(|l| contains(l, b"\"metric\":\"active_subscriber_count\""))
        .ok_or("report has no active_subscriber_count line")?;
    ensure!(
        line == eval.as_slice(),
        "eval and report lines differ:\n{}\n{}",
        String::from_utf8_lossy(&eval),
        String::from_utf8_lossy(line)
    );
    let value: serde_json::Value = serde_json::from_slice(&eval).map_err(err)?;
    let got = value["value"]
        .as_str()
        .and_then(|v| Decimal::from_str(v).ok())
        .ok_or("value missing")?;
    let oracle = brute_active(ACTIVATIONS);
    ensure!(
        ACTIVATIONS.lines().count() == 9 && oracle == 5,
        "fixture oracle {oracle}"
    );
    ensure!(
        got == Decimal::from(oracle),
        "metric {got}, brute force {oracle}"
    );
    Ok(format!(
        "eval line == report line; value {got} == brute force {oracle}"
    ))
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

// ------------------------------------------------------------- criterion 9

fn row_level_security() -> Outcome {
    let fx = Fixture::new();
    let (manifest, _) = fx.scenario(
        r#"{"seed":9,"subscribers":300,"start":"2026-01-01","days":20}"#,
        None,
    )?;
    let as_of = add_days(manifest.first_partition, 25);
    fx.run(as_of)?;
    let cfg = fx.cfg()?;
    let replay = pipeline::replay(&fx.store, &cfg, as_of).map_err(err)?;
    let rows: Vec<(String, EntityKind, Row)> = replay
        .staged
        .iter()
        .filter(|(_, r)| r.is_pass() && r.get(governed::TERRITORY_FIELD).is_some())
        .map(|(_, r)| {
            (
                r.lineage_id.clone(),
                r.entity_kind,
                Row {
                    fields: r.fields.clone(),
                    source_id: r.source_id.clone(),
                    config_version: String::new(),
                },
            )
        })
        .collect();
    let all: BTreeSet<&str> = rows.iter().map(|(id, _, _)| id.as_str()).collect();

    let mut union = BTreeSet::new();
    let mut regional_used = 0;
    for region in ["NE", "NW", "SE", "SW"] {
        let role = format!("regional_ops_{region}");
        let session = Session::open(&fx.store, &cfg, &role, &[]).map_err(err)?;
        let seen: BTreeSet<&str> = rows
            .iter()
            .filter(|(_, kind, row)| session.visible(&[kind.as_str()], row))
            .map(|(id, _, _)| id.as_str())
            .collect();
        ensure!(union.is_disjoint(&seen), "{role} overlaps another role");
        union.extend(seen);
        regional_used += audited_eval(&fx, &session, as_of)?;
    }
    ensure!(
        union == all,
        "union covers {} of {} territory-tagged rows",
        union.len(),
        all.len()
    );

    let admin = Session::open(&fx.store, &cfg, "admin", &[]).map_err(err)?;
    let admin_used = audited_eval(&fx, &admin, as_of)?;
    ensure!(
        regional_used == admin_used,
        "regional rows {regional_used} vs admin {admin_used}"
    );

    let nobody = Session::open(&fx.store, &cfg, "no_such_role", &[]).map_err(err)?;
    let hidden = rows
        .iter()
        .filter(|(_, kind, row)| nobody.visible(&[kind.as_str()], row))
        .count();
    let used = audited_eval(&fx, &nobody, as_of)?;
    ensure!(
        hidden == 0 && used == 0,
        "policy-less role sees {hidden} rows, metric used {used}"
    );
    Ok(format!(
        "4 disjoint roles cover {} rows; no-policy role sees 0; 1 audit event per evaluation",
        all.len()
    ))
}

/// Evaluates the subscriber metric and checks exactly one event was appended.
fn audited_eval(fx: &Fixture, session: &Session, as_of: Date) -> Result<usize, String> {
    let before = governed::audit_status(&fx.store).map_err(err)?.0.len();
    let results = session
        .eval_metrics(&["active_subscriber_count".to_string()], as_of)
        .map_err(err)?;
    let (events, report) = governed::audit_status(&fx.store).map_err(err)?;
    ensure!(
        report.ok() && events.len() == before + 1,
        "{} audit events appended for role {}",
        events.len() - before,
        session.role
    );
    let last = events.last().expect("just appended");
    ensure!(
        last.action == Action::EvaluateMetric && last.principal.role == session.role,
        "wrong audit event"
    );
    Ok(results[0].rows_used)
}

// ------------------------------------------------------------ criterion 10

fn audit_tamper() -> Outcome {
    let fx = Fixture::new();
    let start = date("2025-01-01");
    for i in 0..40u64 {
        governed::append_audit(
            &fx.store,
            AuditEntry {
                as_of: add_days(start, i as i64 * 3),
                principal: Principal {
                    role: format!("role{}", i % 3),
                    territory: BTreeSet::from([format!("location_id=R{}", i % 4)]),
                },
                action: Action::ReadReport,
                object: "exceptions".into(),
                row_count: i * 7,
                policy_version: "ab".repeat(32),
                detail: BTreeMap::new(),
            },
        )
        .map_err(err)?;
    }
    let compacted = governed::compact_audit(&fx.store, 30, add_days(start, 120)).map_err(err)?;
    let (events, report) = governed::audit_status(&fx.store).map_err(err)?;
    ensure!(
        compacted && report.ok() && events.len() < 40 && !events.is_empty(),
        "compaction left {} events, ok={}",
        events.len(),
        report.ok()
    );

    let path = fx.store.audit_log();
    let pristine = fx.bytes(&path);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut offset = 0;
    let mut flips = 0;
    for e in &events {
        let len = e.to_line().len();
        for _ in 0..8 {
            let mut bytes = pristine.clone();
            bytes[offset + rng.gen_range(0..len)] ^= 1 << rng.gen_range(0..8);
            store::write_atomic(&path, &bytes).map_err(err)?;
            let (_, report) = governed::audit_status(&fx.store).map_err(err)?;
            let at = report.broken.as_ref().map(|b| b.seq);
            ensure!(
                at == Some(e.seq),
                "flip in seq {} reported at {at:?}",
                e.seq
            );
            flips += 1;
        }
        offset += len + 1;
    }
    store::write_atomic(&path, &pristine).map_err(err)?;
    ensure!(
        governed::audit_status(&fx.store).map_err(err)?.1.ok(),
        "restored log fails"
    );
    Ok(format!(
        "{} retained events after compaction; {flips} bit flips located exactly",
        events.len()
    ))
}

// ------------------------------------------------------------ criterion 11

fn supply(kind: EntityKind, id_field: &str, id: &str, qty: &str) -> StagedRecord {
    let fields = [
        (id_field, id),
        ("po_id", "PO-7"),
        ("material_code", "1001"),
        ("location_id", "NE"),
        ("quantity", qty),
    ];
    StagedRecord {
        lineage_id: format!("lin-{id}"),
        source_id: "erp_supply".into(),
        entity_kind: kind,
        event_date: Some(date("2026-01-05")),
        fields: fields
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        quality: Quality::Pass,
        config_version: String::new(),
    }
}

fn grain_join() -> Outcome {
    let receipts = [
        supply(EntityKind::Receiving, "receipt_id", "R1", "10"),
        supply(EntityKind::Receiving, "receipt_id", "R2", "20"),
        supply(EntityKind::Receiving, "receipt_id", "R3", "5"),
    ];
    let issues = [
        supply(EntityKind::Issuance, "issue_id", "I1", "7"),
        supply(EntityKind::Issuance, "issue_id", "I2", "8"),
    ];
    let spec = |kind, name: &str| GrainSpec {
        entity_kind: kind,
        grain: vec!["po_id".into(), "material_code".into()],
        measures: vec![Measure {
            name: name.into(),
            agg: Aggregation::Sum,
            field: Some("quantity".into()),
        }],
    };
    let left =
        dedup_and_aggregate(&receipts, &spec(EntityKind::Receiving, "received")).map_err(err)?;
    let right = dedup_and_aggregate(&issues, &spec(EntityKind::Issuance, "issued")).map_err(err)?;
    let joined = join_at_grain(&left.rows, &right.rows).map_err(err)?;

    let naive: Vec<(i64, i64)> = [10, 20, 5]
        .iter()
        .flat_map(|r| [7, 8].iter().map(move |i| (*r, *i)))
        .collect();
    let naive_received: i64 = naive.iter().map(|p| p.0).sum();
    ensure!(
        naive.len() == 6 && naive_received == 70,
        "naive fan-out oracle"
    );
    let (received, issued) = (Decimal::from(10 + 20 + 5), Decimal::from(7 + 8));
    ensure!(joined.len() == 1, "{} joined rows", joined.len());
    let row = &joined[0];
    let r = row.left.get("received").copied();
    let i = row.right.as_ref().and_then(|m| m.get("issued").copied());
    ensure!(
        r == Some(received) && i == Some(issued),
        "joined received {r:?} issued {i:?}"
    );
    Ok(format!("1 row at (po_id, material_code): received {received}, issued {issued}; naive join gives 6 rows, received {naive_received}"))
}

// ------------------------------------------------------------ criterion 12

fn performance() -> Outcome {
    let fx = Fixture::new();
    let json = r#"{"seed":12,"subscribers":24000,"start":"2026-01-01","days":60,
        "faults":[{"kind":"silent_mapping_failure","count":25}]}"#;
    let cfg = ScenarioConfig::from_json(json).map_err(err)?;
    let scenario = generate(&cfg).map_err(err)?;
    let rows: u64 = scenario.manifest.rows.values().sum();
    ensure!(rows >= PERF_MIN_ROWS, "scenario has only {rows} rows");
    let dir = fx.dir.path().join("scenario");
    synth_io::write_scenario(&scenario, &dir).map_err(err)?;
    let t = Instant::now();
    synth_io::load(&fx.store, &dir, None).map_err(err)?;
    fx.run(scenario.manifest.settles_by)?;
    let elapsed = t.elapsed();
    ensure!(elapsed < PERF_BUDGET, "{rows} rows took {elapsed:.1?}");
    Ok(format!(
        "{rows} rows ingested, staged, reconciled and snapshotted in {elapsed:.1?}"
    ))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "silent mapping failures", silent_mapping_failures),
        (2, "zero-fault scenario", zero_fault),
        (3, "exception lifecycle", lifecycle),
        (4, "day-by-day equals batch", day_by_day_equals_batch),
        (5, "FIFO aging", fifo_histories),
        (6, "detector scores", detector_scores),
        (7, "contaminated window", contaminated_window),
        (8, "metric paths agree", metric_paths_agree),
        (9, "row-level security", row_level_security),
        (10, "audit tamper evidence", audit_tamper),
        (11, "grain-correct join", grain_join),
        (12, "10^5-row performance", performance),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!(
                "criterion {n:>2} PASS  {name}: {detail} [{:.1?}]",
                t.elapsed()
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{:.1?}]", t.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
