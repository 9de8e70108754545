//! On-disk store: path layout, atomic writes, NDJSON files and the lock.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use gera_core::Date;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{integrity, invalid, GeraError, Result};

/// How long a writer waits for a held lock.
const LOCK_WAIT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Store {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config(&self, name: &str) -> PathBuf {
        self.root.join("config").join(name)
    }

    pub fn raw_manifest(&self) -> PathBuf {
        self.root.join("raw").join("MANIFEST.json")
    }

    pub fn raw_batch(&self, source_id: &str, as_of: Date, hash: &str) -> PathBuf {
        self.root
            .join("raw")
            .join(source_id)
            .join(as_of.to_string())
            .join(format!("batch-{hash}.ndjson"))
    }

    pub fn staged_batch(&self, entity: &str, as_of: Date, hash: &str) -> PathBuf {
        self.root
            .join("staged")
            .join(entity)
            .join(as_of.to_string())
            .join(format!("batch-{hash}.ndjson"))
    }

    pub fn quarantine_batch(&self, as_of: Date, hash: &str) -> PathBuf {
        self.root
            .join("quarantine")
            .join(as_of.to_string())
            .join(format!("batch-{hash}.ndjson"))
    }

    pub fn staging_report(&self, as_of: Date) -> PathBuf {
        self.root
            .join("staged")
            .join("REPORTS")
            .join(format!("{as_of}.json"))
    }

    pub fn exceptions(&self) -> PathBuf {
        self.root.join("recon").join("exceptions.ndjson")
    }

    pub fn recon_ledger(&self) -> PathBuf {
        self.root.join("recon").join("LEDGER.json")
    }

    pub fn recon_report(&self, as_of: Date, ext: &str) -> PathBuf {
        self.root
            .join("recon")
            .join("reports")
            .join(format!("{as_of}.{ext}"))
    }

    pub fn snapshot(&self, date: Date) -> PathBuf {
        self.root
            .join("inventory")
            .join("snapshots")
            .join(format!("{date}.ndjson"))
    }

    pub fn flags(&self) -> PathBuf {
        self.root.join("inventory").join("flags.ndjson")
    }

    pub fn dispositions(&self) -> PathBuf {
        self.root.join("inventory").join("dispositions.ndjson")
    }

    pub fn audit_log(&self) -> PathBuf {
        self.root.join("audit").join("log.ndjson")
    }

    pub fn audit_manifest(&self) -> PathBuf {
        self.root.join("audit").join("MANIFEST.json")
    }

    pub fn active_policies(&self) -> PathBuf {
        self.root.join("audit").join("policies.active.json")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.root.join("metrics")
    }

    /// Exclusive writer lock for pipeline state.
    pub fn lock(&self) -> Result<Lock> {
        Lock::acquire(self.root.join("LOCK"))
    }

    /// Exclusive writer lock for the audit log.
    pub fn audit_lock(&self) -> Result<Lock> {
        Lock::acquire(self.root.join("audit").join("LOCK"))
    }
}

/// Lock file held for the lifetime of the value.
#[derive(Debug)]
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(path: PathBuf) -> Result<Lock> {
        ensure_parent(&path)?;
        let started = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(Lock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if started.elapsed() > LOCK_WAIT {
                        return Err(invalid(format!(
                            "{} is held by another writer; remove it if no gera process is running",
                            path.display()
                        )));
                    }
                    thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(GeraError::io(&path, e)),
            }
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| GeraError::io(dir, e))?;
    }
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| GeraError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GeraError::io(path, e))
}

/// `None` when the file does not exist.
pub fn read_optional(path: &Path) -> Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(GeraError::io(path, e)),
    }
}

/// Write-then-rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| GeraError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| GeraError::io(&tmp, e))?;
    f.sync_all().map_err(|e| GeraError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| GeraError::io(path, e))
}

/// Appends lines and syncs before returning.
pub fn append_lines(path: &Path, lines: &[String]) -> Result<()> {
    if lines.is_empty() {
        return Ok(());
    }
    ensure_parent(path)?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GeraError::io(path, e))?;
    let mut buf = String::new();
    for line in lines {
        buf.push_str(line);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())
        .map_err(|e| GeraError::io(path, e))?;
    f.sync_all().map_err(|e| GeraError::io(path, e))
}

/// Pretty JSON with a trailing newline; key order follows the type.
pub fn to_json_file<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_file(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| integrity(format!("{}: {e}", path.display())))
}

pub fn read_json_or_default<T: DeserializeOwned + Default>(path: &Path) -> Result<T> {
    match read_optional(path)? {
        None => Ok(T::default()),
        Some(bytes) => serde_json::from_slice(&bytes)
            .map_err(|e| integrity(format!("{}: {e}", path.display()))),
    }
}

pub fn ndjson_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn parse_ndjson<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| integrity(format!("{}: not UTF-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| integrity(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Missing file reads as empty.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    match read_optional(path)? {
        None => Ok(Vec::new()),
        Some(bytes) => parse_ndjson(path, &bytes),
    }
}
