//! Command line. Exit codes: 0 success, 1 validation or I/O, 2 integrity.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gera_core::date::{parse_iso, Date};
use gera_core::digest::canonical_json;
use gera_core::governance::DEFAULT_RETENTION_DAYS;
use gera_core::inventory::{Disposition, DispositionRecord};
use gera_core::reconcile::Change;
use gera_core::synth::{generate, ScenarioConfig};
use gera_core::EntityKind;

use crate::config::{self, Config};
use crate::error::{invalid, GeraError, Result};
use crate::governed::{self, metric_line, metric_text, Session};
use crate::pipeline::{self, DEFAULT_LOOKBACK_DAYS};
use crate::raw::{self, IngestOutcome, IngestRequest, SourceFormat};
use crate::store::{self, Store};
use crate::synth_io;

fn date_arg(s: &str) -> std::result::Result<Date, String> {
    parse_iso(s).ok_or_else(|| format!("`{s}` is not a YYYY-MM-DD date"))
}

fn entity_arg(s: &str) -> std::result::Result<EntityKind, String> {
    s.parse::<EntityKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "gera",
    version,
    about = "Deterministic reconciliation over telecom operational feeds"
)]
pub struct Cli {
    /// Store directory.
    #[arg(long, env = "GERA_STORE", default_value = ".", global = true)]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the default configuration into the store.
    Init,
    /// Ingest one CSV or NDJSON source file as an immutable batch.
    Ingest {
        file: PathBuf,
        /// Source system identifier.
        #[arg(long)]
        source: String,
        /// Entity kind the file carries.
        #[arg(long, value_parser = entity_arg)]
        entity: EntityKind,
        /// Partition date of the extract.
        #[arg(long, value_parser = date_arg)]
        as_of: Date,
    },
    /// Raw tier maintenance.
    #[command(subcommand)]
    Raw(RawCommand),
    /// Stage, reconcile and snapshot every day through --as-of.
    Run {
        /// Last day to process.
        #[arg(long, value_parser = date_arg)]
        as_of: Date,
        /// Late partitions older than this many days before --as-of are skipped.
        #[arg(long, default_value_t = DEFAULT_LOOKBACK_DAYS)]
        lookback: u32,
    },
    /// Reconciliation reports.
    #[command(subcommand)]
    Recon(ReconCommand),
    /// Open, resolve and assign reconciliation exceptions.
    #[command(subcommand)]
    Exceptions(ExceptionsCommand),
    /// Inventory aging and anomaly flags.
    #[command(subcommand)]
    Inventory(InventoryCommand),
    /// Governed metric definitions and evaluation.
    #[command(subcommand)]
    Metric(MetricCommand),
    /// Row-level security policies.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Audit log verification and retention.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Synthetic scenarios with ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
pub enum RawCommand {
    /// Print stored records of one source as NDJSON.
    Replay {
        #[arg(long)]
        source: String,
        #[arg(long, value_parser = date_arg)]
        from: Date,
        #[arg(long, value_parser = date_arg)]
        to: Date,
    },
    /// Check every stored batch against its digest.
    Verify,
}

/// Identity of a governed read.
#[derive(Debug, Args)]
pub struct Reader {
    /// Processed day to read, YYYY-MM-DD.
    #[arg(long, value_parser = date_arg)]
    pub as_of: Date,
    /// Principal whose policies govern the read.
    #[arg(long, env = "GERA_ROLE")]
    pub role: String,
}

#[derive(Debug, Subcommand)]
pub enum ReconCommand {
    /// Reconciliation report over the rows the role may see.
    Report {
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExceptionsCommand {
    /// Exceptions visible to the role.
    List {
        #[command(flatten)]
        reader: Reader,
        /// Only open exceptions.
        #[arg(long)]
        open: bool,
        #[arg(long)]
        json: bool,
    },
    /// Close an open exception with a note.
    Resolve {
        exception_id: String,
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        owner: String,
        #[arg(long)]
        note: String,
    },
    /// Hand an open exception to an assignee.
    Assign {
        exception_id: String,
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        owner: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DispositionArg {
    Open,
    Confirmed,
    FalsePositive,
}

impl From<DispositionArg> for Disposition {
    fn from(d: DispositionArg) -> Disposition {
        match d {
            DispositionArg::Open => Disposition::Open,
            DispositionArg::Confirmed => Disposition::Confirmed,
            DispositionArg::FalsePositive => Disposition::FalsePositive,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum InventoryCommand {
    /// FIFO aging by material and location.
    Aging {
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        json: bool,
    },
    /// Investigation queue of open anomaly flags.
    Flags {
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        json: bool,
    },
    /// Record a disposition for an anomaly flag.
    Dispose {
        flag_id: String,
        #[command(flatten)]
        reader: Reader,
        #[arg(long, value_enum)]
        disposition: DispositionArg,
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricCommand {
    /// Registered metrics with their sources.
    List,
    /// Evaluate one metric as of a processed day.
    Eval {
        name: String,
        #[command(flatten)]
        reader: Reader,
        /// Narrow to these location_id values.
        #[arg(long)]
        territory: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Every registered metric, one result each.
    Report {
        #[command(flatten)]
        reader: Reader,
        #[arg(long)]
        territory: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Activate a policy file; audited as an admin change.
    Load {
        file: PathBuf,
        #[command(flatten)]
        reader: Reader,
    },
    /// Print the active policies and their version.
    Show,
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Check the hash chain and manifest; exit 2 names the first bad sequence.
    Verify,
    /// Drop events older than the retention window behind a tombstone.
    Compact {
        #[arg(long, value_parser = date_arg)]
        as_of: Date,
        #[arg(long, default_value_t = DEFAULT_RETENTION_DAYS)]
        retention_days: u32,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Generate a seeded scenario with its ground truth.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Install a scenario's crosswalk and ingest its extracts.
    Load {
        dir: PathBuf,
        #[arg(long, value_parser = date_arg)]
        through: Option<Date>,
    },
    /// Score the store's outputs against ground truth.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = date_arg)]
        as_of: Date,
        #[arg(long)]
        json: bool,
    },
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("gera: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| GeraError::io(std::path::Path::new("<stdout>"), e))
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    canonical_json(value) + "\n"
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let store = Store::open(&cli.store);
    match &cli.command {
        Command::Init => {
            let created = config::init(&store)?;
            Config::load(&store)?;
            for path in &created {
                emit(out, &format!("created {path}\n"))?;
            }
            if created.is_empty() {
                emit(out, "configuration already present\n")?;
            }
            Ok(())
        }
        Command::Ingest {
            file,
            source,
            entity,
            as_of,
        } => {
            let cfg = Config::load(&store)?;
            let bytes = store::read_bytes(file)?;
            let req = IngestRequest {
                bytes: &bytes,
                format: SourceFormat::from_path(file)?,
                source_id: source,
                entity_kind: *entity,
                as_of: *as_of,
            };
            let _lock = store.lock()?;
            match raw::ingest(&store, &cfg.rules, &req)? {
                IngestOutcome::Written(receipt) => emit(out, &json_line(&receipt)),
                IngestOutcome::Rejected(rejected) => {
                    for d in &rejected.0 {
                        eprintln!("{}:{}: {}", file.display(), d.line, d.message);
                    }
                    Err(invalid(format!(
                        "{}: batch rejected ({} bad rows); nothing written",
                        file.display(),
                        rejected.0.len()
                    )))
                }
            }
        }
        Command::Raw(RawCommand::Replay { source, from, to }) => {
            for record in raw::replay(&store, source, *from, *to)? {
                emit(
                    out,
                    &(serde_json::to_string(&record).expect("serializable") + "\n"),
                )?;
            }
            Ok(())
        }
        Command::Raw(RawCommand::Verify) => {
            let broken = raw::verify(&store)?;
            if broken.is_empty() {
                return emit(out, "raw store verified\n");
            }
            for (_, message) in &broken {
                emit(out, &format!("{message}\n"))?;
            }
            Err(crate::error::integrity(format!(
                "{} raw partition(s) failed verification",
                broken.len()
            )))
        }
        Command::Run { as_of, lookback } => {
            let cfg = Config::load(&store)?;
            let _lock = store.lock()?;
            let summary = pipeline::run(&store, &cfg, *as_of, *lookback)?;
            emit(out, &json_line(&summary))
        }
        Command::Recon(ReconCommand::Report { reader, json }) => {
            let cfg = Config::load(&store)?;
            let session = Session::open(&store, &cfg, &reader.role, &[])?;
            let report = session.recon_report(reader.as_of)?;
            emit(
                out,
                &if *json {
                    json_line(&report)
                } else {
                    report.to_text()
                },
            )
        }
        Command::Exceptions(cmd) => exceptions(&store, cmd, out),
        Command::Inventory(cmd) => inventory(&store, cmd, out),
        Command::Metric(cmd) => metric(&store, cmd, out),
        Command::Policy(PolicyCommand::Load { file, reader }) => {
            let cfg = Config::load(&store)?;
            let bytes = store::read_bytes(file)?;
            match governed::load_policy_file(&store, &cfg, &reader.role, &bytes, reader.as_of)? {
                Some(event) => emit(
                    out,
                    &format!(
                        "policy version {} active (audit seq {})\n",
                        event.policy_version, event.seq
                    ),
                ),
                None => emit(out, "policy file already active; nothing recorded\n"),
            }
        }
        Command::Policy(PolicyCommand::Show) => {
            let cfg = Config::load(&store)?;
            let policies = governed::load_policies(&store, &cfg)?;
            emit(out, &format!("version {}\n", policies.version))?;
            for p in &policies.policies {
                emit(out, &json_line(p))?;
            }
            Ok(())
        }
        Command::Audit(AuditCommand::Verify) => {
            let (_, report) = governed::audit_status(&store)?;
            emit(out, &governed::verify_report_text(&report))?;
            if report.ok() {
                Ok(())
            } else {
                Err(crate::error::integrity("audit verification failed"))
            }
        }
        Command::Audit(AuditCommand::Compact {
            as_of,
            retention_days,
        }) => {
            let changed = governed::compact_audit(&store, *retention_days, *as_of)?;
            emit(
                out,
                if changed {
                    "audit log compacted\n"
                } else {
                    "nothing to compact\n"
                },
            )
        }
        Command::Synth(cmd) => synth(&store, cmd, out),
    }
}

fn exceptions(store: &Store, cmd: &ExceptionsCommand, out: &mut dyn Write) -> Result<()> {
    let cfg = Config::load(store)?;
    match cmd {
        ExceptionsCommand::List { reader, open, json } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let views = session.exceptions(reader.as_of, *open)?;
            if *json {
                for v in &views {
                    emit(out, &json_line(v))?;
                }
                return Ok(());
            }
            emit(
                out,
                &format!(
                    "{:<22} {:<22} {:<12} {:<12} {:>5} {:<4} {}\n",
                    "exception_id", "spec", "category", "status", "age", "esc", "natural_key"
                ),
            )?;
            for v in &views {
                let e = &v.exception;
                emit(
                    out,
                    &format!(
                        "{:<22} {:<22} {:<12} {:<12} {:>5} {:<4} {}\n",
                        e.exception_id,
                        e.spec,
                        e.category.as_str(),
                        e.status.as_str(),
                        v.age_days,
                        if v.escalated { "yes" } else { "no" },
                        e.natural_key
                    ),
                )?;
            }
            Ok(())
        }
        ExceptionsCommand::Resolve {
            exception_id,
            reader,
            owner,
            note,
        } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let change = Change::ResolvedManual {
                owner: owner.clone(),
                note: note.clone(),
            };
            let event = session.manual_exception(reader.as_of, exception_id, change)?;
            emit(out, &json_line(&event))
        }
        ExceptionsCommand::Assign {
            exception_id,
            reader,
            owner,
        } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let event = session.manual_exception(
                reader.as_of,
                exception_id,
                Change::Assigned {
                    owner: owner.clone(),
                },
            )?;
            emit(out, &json_line(&event))
        }
    }
}

fn inventory(store: &Store, cmd: &InventoryCommand, out: &mut dyn Write) -> Result<()> {
    let cfg = Config::load(store)?;
    match cmd {
        InventoryCommand::Aging { reader, json } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let report = session.inventory_aging(reader.as_of)?;
            emit(
                out,
                &if *json {
                    json_line(&report)
                } else {
                    report.to_text()
                },
            )
        }
        InventoryCommand::Flags { reader, json } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let queue = session.anomaly_queue(reader.as_of)?;
            if *json {
                for line in &queue {
                    emit(
                        out,
                        &(serde_json::to_string(line).expect("serializable") + "\n"),
                    )?;
                }
                return Ok(());
            }
            emit(
                out,
                &format!(
                    "{:<24} {:<10} {:>10} {:>8} {}\n",
                    "series", "date", "observed", "score", "flags"
                ),
            )?;
            for line in &queue {
                let methods: Vec<&str> = line.methods.iter().map(|m| m.as_str()).collect();
                emit(
                    out,
                    &format!(
                        "{:<24} {:<10} {:>10} {:>8.3} {} ({})\n",
                        line.series,
                        line.snapshot_date,
                        line.observed,
                        line.normalized_score,
                        line.flag_ids.join(","),
                        methods.join(",")
                    ),
                )?;
            }
            Ok(())
        }
        InventoryCommand::Dispose {
            flag_id,
            reader,
            disposition,
            note,
        } => {
            let session = Session::open(store, &cfg, &reader.role, &[])?;
            let record = DispositionRecord {
                flag_id: flag_id.clone(),
                disposition: (*disposition).into(),
                note: note.clone(),
                as_of: reader.as_of,
            };
            session.dispose(record.clone())?;
            emit(out, &json_line(&record))
        }
    }
}

fn metric(store: &Store, cmd: &MetricCommand, out: &mut dyn Write) -> Result<()> {
    let cfg = Config::load(store)?;
    match cmd {
        MetricCommand::List => {
            for name in cfg.metrics.order() {
                let m = cfg.metrics.get(name).expect("ordered names are registered");
                let sources: Vec<&str> = m.lineage.sources.iter().map(String::as_str).collect();
                emit(
                    out,
                    &format!("{name}\t{}\t{}\n", sources.join(","), m.location),
                )?;
            }
            Ok(())
        }
        MetricCommand::Eval {
            name,
            reader,
            territory,
            json,
        } => {
            let session = Session::open(store, &cfg, &reader.role, territory)?;
            let results = session.eval_metrics(std::slice::from_ref(name), reader.as_of)?;
            render_metrics(&results, *json, out)
        }
        MetricCommand::Report {
            reader,
            territory,
            json,
        } => {
            let session = Session::open(store, &cfg, &reader.role, territory)?;
            let results = session.eval_metrics(cfg.metrics.order(), reader.as_of)?;
            render_metrics(&results, *json, out)
        }
    }
}

fn render_metrics(
    results: &[gera_core::semantic::MetricResult],
    json: bool,
    out: &mut dyn Write,
) -> Result<()> {
    for r in results {
        let text = if json {
            metric_line(r) + "\n"
        } else {
            metric_text(r)
        };
        emit(out, &text)?;
    }
    Ok(())
}

fn synth(store: &Store, cmd: &SynthCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        SynthCommand::Generate { config, out: dir } => {
            let text = store::read_string(config)?;
            let cfg = ScenarioConfig::from_json(&text)
                .map_err(|e| invalid(format!("{}: {e}", config.display())))?;
            let scenario = generate(&cfg).map_err(|e| invalid(e.to_string()))?;
            let files = synth_io::write_scenario(&scenario, dir)?;
            emit(
                out,
                &format!(
                    "wrote {files} extracts, settles_by {}\n",
                    scenario.manifest.settles_by
                ),
            )
        }
        SynthCommand::Load { dir, through } => {
            let _lock = store.lock()?;
            let summary = synth_io::load(store, dir, *through)?;
            emit(out, &json_line(&summary))
        }
        SynthCommand::Score {
            manifest,
            as_of,
            json,
        } => {
            let cfg = Config::load(store)?;
            let report = synth_io::score_store(store, &cfg, manifest, *as_of)?;
            emit(
                out,
                &if *json {
                    serde_json::to_string(&report).expect("serializable") + "\n"
                } else {
                    synth_io::score_text(&report)
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("gera").chain(args.iter().copied()))
    }

    #[test]
    fn dates_must_be_iso() {
        assert!(parse(&["run", "--as-of", "2026-02-30"]).is_err());
        let cli = parse(&["run", "--as-of", "2026-02-28"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Run {
                lookback: DEFAULT_LOOKBACK_DAYS,
                ..
            }
        ));
    }

    #[test]
    fn entity_kinds_and_dispositions_are_closed_sets() {
        assert!(parse(&[
            "ingest",
            "f.csv",
            "--source",
            "s",
            "--entity",
            "invoice_line",
            "--as-of",
            "2026-01-01"
        ])
        .is_ok());
        assert!(parse(&[
            "ingest",
            "f.csv",
            "--source",
            "s",
            "--entity",
            "invoice",
            "--as-of",
            "2026-01-01"
        ])
        .is_err());
        let base = [
            "inventory",
            "dispose",
            "F1",
            "--as-of",
            "2026-01-01",
            "--role",
            "admin",
            "--disposition",
        ];
        assert!(parse(&[&base[..], &["false-positive"]].concat()).is_ok());
        assert!(parse(&[&base[..], &["maybe"]].concat()).is_err());
    }

    #[test]
    fn territory_narrowing_repeats() {
        let cli = parse(&[
            "metric",
            "eval",
            "m",
            "--as-of",
            "2026-01-01",
            "--role",
            "admin",
            "--territory",
            "NE",
            "--territory",
            "NW",
        ])
        .unwrap();
        let Command::Metric(MetricCommand::Eval { territory, .. }) = cli.command else {
            panic!()
        };
        assert_eq!(territory, ["NE", "NW"]);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(run(["gera", "frobnicate"]), 1);
        assert_eq!(run(["gera", "--help"]), 0);
    }
}
